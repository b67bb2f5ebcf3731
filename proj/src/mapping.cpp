#include "catnet/mapping.hpp"

#include "catnet/sample.hpp"

#include <set>

namespace catnet {

using nlohmann::json;

RemapTable RemapTable::identity(const std::vector<std::string>& class_names) {
  RemapTable t;
  t.targets = class_names;
  for (int i = 0; i < static_cast<int>(class_names.size()); ++i) t.class_to_target[i] = i;
  return t;
}

void RemapTable::validate(int num_classes) const {
  require(!targets.empty(), "remap table has no target categories");
  for (int c = 0; c < num_classes; ++c) {
    auto it = class_to_target.find(c);
    require(it != class_to_target.end(), "remap table misses class " + std::to_string(c));
    require(it->second >= 0 && it->second < static_cast<int>(targets.size()),
            "remap of class " + std::to_string(c) + " points outside the target set");
  }
}

int RemapTable::operator()(int cls) const {
  auto it = class_to_target.find(cls);
  require(it != class_to_target.end(), "remap table misses predicted class " + std::to_string(cls));
  return it->second;
}

json RemapTable::to_json() const {
  json m = json::object();
  for (const auto& [c, t] : class_to_target) m[std::to_string(c)] = targets.at(t);
  return {{"targets", targets}, {"map", m}};
}

RemapTable RemapTable::from_json(const json& j) {
  RemapTable t;
  t.targets = j.at("targets").get<std::vector<std::string>>();
  require(!t.targets.empty(), "remap table has no target categories");
  for (const auto& [k, v] : j.at("map").items()) {
    const auto name = v.get<std::string>();
    auto it = std::find(t.targets.begin(), t.targets.end(), name);
    require(it != t.targets.end(), "remap target " + name + " is not in the target list");
    t.class_to_target[std::stoi(k)] = static_cast<int>(it - t.targets.begin());
  }
  return t;
}

BlockExtent BlockMap::extent(int row, int col) const {
  const int x0 = origin_x + col * block, y0 = origin_y + row * block;
  return {x0, y0, std::min(block, raster_width - x0), std::min(block, raster_height - y0)};
}

json BlockMap::to_json() const {
  json grid = json::array(), fine_grid = json::array();
  for (int r = 0; r < rows; ++r) {
    json row = json::array(), frow = json::array();
    for (int c = 0; c < cols; ++c) {
      row.push_back(targets.at(at(r, c)));
      frow.push_back(fine[static_cast<std::size_t>(r) * cols + c]);
    }
    grid.push_back(row);
    fine_grid.push_back(frow);
  }
  return {{"rows", rows},
          {"cols", cols},
          {"block", block},
          {"origin", {origin_x, origin_y}},
          {"raster", {raster_width, raster_height}},
          {"targets", targets},
          {"grid", grid},
          {"fine", fine_grid}};
}

BlockMap BlockMap::from_json(const json& j) {
  BlockMap m;
  m.rows = j.at("rows");
  m.cols = j.at("cols");
  m.block = j.at("block");
  m.origin_x = j.at("origin")[0];
  m.origin_y = j.at("origin")[1];
  m.raster_width = j.at("raster")[0];
  m.raster_height = j.at("raster")[1];
  m.targets = j.at("targets").get<std::vector<std::string>>();
  const auto& grid = j.at("grid");
  const auto& fine = j.at("fine");
  require(static_cast<int>(grid.size()) == m.rows, "map grid row count mismatch");
  for (int r = 0; r < m.rows; ++r) {
    require(static_cast<int>(grid[r].size()) == m.cols, "map grid column count mismatch");
    for (int c = 0; c < m.cols; ++c) {
      const auto name = grid[r][c].get<std::string>();
      auto it = std::find(m.targets.begin(), m.targets.end(), name);
      require(it != m.targets.end(), "map cell names unknown category " + name);
      m.category.push_back(static_cast<int>(it - m.targets.begin()));
      m.fine.push_back(fine[r][c].get<int>());
    }
  }
  return m;
}

SceneSample block_sample(const RgbImage& raster, int row, int col, int block) {
  const int x0 = col * block, y0 = row * block;
  SceneSample s;
  s.id = "block_" + std::to_string(row) + "_" + std::to_string(col);
  s.center = crop_replicate(raster, x0, y0, block, block);
  s.surrounding = crop_replicate(raster, x0 - block, y0 - block, 3 * block, 3 * block);
  s.global = crop_replicate(raster, x0 - 2 * block, y0 - 2 * block, 5 * block, 5 * block);
  return s;
}

BlockMap map_region(const RgbImage& raster, const Model& model, const RemapTable& remap, int block) {
  require(block > 0, "block size must be positive");
  require(raster.width >= block && raster.height >= block,
          "raster " + std::to_string(raster.width) + "x" + std::to_string(raster.height) +
              " is smaller than one block of " + std::to_string(block));
  remap.validate(model.config().num_classes);
  BlockMap m;
  m.block = block;
  m.raster_width = raster.width;
  m.raster_height = raster.height;
  m.cols = (raster.width + block - 1) / block;
  m.rows = (raster.height + block - 1) / block;
  m.targets = remap.targets;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      const PreparedSample p = prepare_sample(block_sample(raster, r, c, block), model.config().encoder);
      const int cls = model.forward(p).predicted;
      m.fine.push_back(cls);
      m.category.push_back(remap(cls));
    }
  return m;
}

BlockAnnotations annotations_from_json(const json& j, const std::vector<std::string>& targets) {
  BlockAnnotations a;
  for (const auto& e : j) {
    const int r = e.at("row"), c = e.at("col");
    const auto& cat = e.at("category");
    int idx = -1;
    if (cat.is_string()) {
      auto it = std::find(targets.begin(), targets.end(), cat.get<std::string>());
      require(it != targets.end(), "annotation names unknown category " + cat.get<std::string>());
      idx = static_cast<int>(it - targets.begin());
    } else {
      idx = cat.get<int>();
    }
    require(a.emplace(std::make_pair(r, c), idx).second,
            "duplicate annotation at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
  }
  return a;
}

MetricReport score_map(const BlockMap& map, const BlockAnnotations& annotations) {
  require(!annotations.empty(), "no annotations to score");
  const int n = static_cast<int>(map.targets.size());
  std::vector<int> preds, labels;
  for (const auto& [rc, cat] : annotations) {
    const auto [r, c] = rc;
    require(r >= 0 && r < map.rows && c >= 0 && c < map.cols,
            "annotation (" + std::to_string(r) + ", " + std::to_string(c) + ") lies outside the " +
                std::to_string(map.rows) + "x" + std::to_string(map.cols) + " grid");
    require(cat >= 0 && cat < n, "annotation category out of range");
    preds.push_back(map.at(r, c));
    labels.push_back(cat);
  }
  ReportOptions opts;
  opts.skip_empty = true;
  return make_report(preds, labels, n, opts);
}

RgbImage render_block_map(const BlockMap& map, int ppb) {
  static constexpr std::uint8_t palette[][3] = {{230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
                                                {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
                                                {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {170, 110, 40}};
  RgbImage img(map.cols * ppb, map.rows * ppb);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto* col = palette[map.at(y / ppb, x / ppb) % std::size(palette)];
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = col[k];
    }
  return img;
}

}  // namespace catnet
