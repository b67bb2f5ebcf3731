#include "catnet/mapping.hpp"
#include "catnet/synthetic.hpp"

#include <doctest.h>

#include <random>

using namespace catnet;

namespace {

RgbImage noise_raster(int w, int h, std::uint64_t seed) {
  RgbImage img(w, h);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

Model small_model(int classes) {
  ModelConfig c;
  c.num_classes = classes;
  return Model(c);
}

}  // namespace

TEST_CASE("block grid uses ceiling division") {
  const auto m = small_model(8);
  const auto a = map_region(noise_raster(512, 512, 1), m, RemapTable::identity(std::vector<std::string>(8, "x")), 256);
  CHECK(a.rows == 2);
  CHECK(a.cols == 2);
  RemapTable to_ufz;
  for (int c = 0; c < 8; ++c) to_ufz.class_to_target[c] = c;
  const auto b = map_region(noise_raster(1280, 768, 2), m, to_ufz, 256);
  CHECK(b.cols == 5);
  CHECK(b.rows == 3);
  CHECK(b.category.size() == 15);
  CHECK(b.fine.size() == 15);
  CHECK(b.targets == kUfzCategories);
  CHECK_THROWS(map_region(noise_raster(100, 300, 3), m, RemapTable::identity(std::vector<std::string>(8, "x")), 256));
}

TEST_CASE("block extents cover every pixel exactly once") {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{1280, 768}, {1000, 700}, {256, 513}}) {
    BlockMap map;
    map.block = 256;
    map.raster_width = w;
    map.raster_height = h;
    map.cols = (w + 255) / 256;
    map.rows = (h + 255) / 256;
    std::vector<int> hits(static_cast<std::size_t>(w) * h, 0);
    for (int r = 0; r < map.rows; ++r)
      for (int c = 0; c < map.cols; ++c) {
        const auto e = map.extent(r, c);
        CHECK(e.width > 0);
        CHECK(e.height > 0);
        for (int y = e.y0; y < e.y0 + e.height; ++y)
          for (int x = e.x0; x < e.x0 + e.width; ++x) ++hits[static_cast<std::size_t>(y) * w + x];
      }
    CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
    CHECK(*std::max_element(hits.begin(), hits.end()) == 1);
  }
}

TEST_CASE("block samples are concentric and edge-replicated") {
  const auto raster = noise_raster(512, 256, 4);
  const auto s = block_sample(raster, 0, 1, 128);
  CHECK(s.center == crop_replicate(raster, 128, 0, 128, 128));
  CHECK(s.surrounding.width == 384);
  CHECK(s.global.width == 640);
  CHECK(crop_replicate(s.global, 256, 256, 128, 128) == s.center);
  // Above the raster, rows replicate the top edge.
  for (int x = 0; x < 384; ++x)
    for (int c = 0; c < 3; ++c) CHECK(s.surrounding.at(x, 0, c) == s.surrounding.at(x, 128, c));
}

TEST_CASE("remap tables are total and validated") {
  RemapTable r;
  for (int c = 0; c < 4; ++c) r.class_to_target[c] = c % 2;
  CHECK_NOTHROW(r.validate(4));
  CHECK(r(3) == 1);
  CHECK_THROWS(r.validate(5));
  CHECK_THROWS(r(7));
  r.class_to_target[2] = 99;
  CHECK_THROWS(r.validate(4));
  const auto j = nlohmann::json::parse(R"({"targets": ["Res.", "Par."], "map": {"0": "Res.", "1": "Par."}})");
  const auto t = RemapTable::from_json(j);
  CHECK(t(1) == 1);
  CHECK(RemapTable::from_json(t.to_json()).class_to_target == t.class_to_target);
  CHECK_THROWS(RemapTable::from_json(nlohmann::json::parse(R"({"targets": ["Res."], "map": {"0": "Ind."}})")));
  const auto id = RemapTable::identity({"a", "b"});
  CHECK(id.targets == std::vector<std::string>{"a", "b"});
  CHECK(id(1) == 1);
}

TEST_CASE("score_map equals the metrics module on the annotated subset") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    BlockMap map;
    map.rows = 4;
    map.cols = 6;
    map.block = 256;
    map.targets = kUfzCategories;
    std::uniform_int_distribution<int> cat(0, 7);
    for (int i = 0; i < 24; ++i) map.category.push_back(cat(rng)), map.fine.push_back(0);
    BlockAnnotations ann;
    std::vector<int> preds, labels;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 6; ++c)
        if (rng() % 2) {
          const int y = cat(rng);
          ann[{r, c}] = y;
          preds.push_back(map.at(r, c));
          labels.push_back(y);
        }
    if (labels.empty()) continue;
    CHECK(score_map(map, ann) == make_report(preds, labels, 8, {.skip_empty = true}));
  }
  BlockMap small;
  small.rows = small.cols = 1;
  small.category = {2};
  small.fine = {2};
  small.targets = kUfzCategories;
  CHECK(score_map(small, {{{0, 0}, 2}}).oa == 1.0);
  CHECK_THROWS(score_map(small, {{{1, 0}, 2}}));
}

TEST_CASE("annotations and block maps serialize") {
  const auto ann = annotations_from_json(
      nlohmann::json::parse(R"([{"row": 0, "col": 1, "category": "Par."}, {"row": 2, "col": 0, "category": 1}])"),
      kUfzCategories);
  CHECK(ann.at({0, 1}) == 7);
  CHECK(ann.at({2, 0}) == 1);
  CHECK_THROWS(annotations_from_json(nlohmann::json::parse(R"([{"row": 0, "col": 0, "category": "Lake"}])"),
                                     kUfzCategories));
  const auto map = map_region(noise_raster(300, 200, 5), small_model(8),
                              RemapTable::identity(std::vector<std::string>(8, "x")), 128);
  const auto back = BlockMap::from_json(map.to_json());
  CHECK(back.category == map.category);
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  const auto png = render_block_map(map, 4);
  CHECK(png.width == 12);
  CHECK(png.height == 8);
}
