#pragma once

#include "catnet/data_model.hpp"
#include "catnet/image.hpp"
#include "catnet/metrics.hpp"
#include "catnet/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace catnet {

/// Application land-use categories.
inline const std::vector<std::string> kUfzCategories{"Res.", "Com.", "Ind.", "Tra.", "Edu.", "Med.", "Spo.", "Par."};

/// Maps every fine-grained class index to an application category index.
struct RemapTable {
  std::vector<std::string> targets = kUfzCategories;
  std::map<int, int> class_to_target;

  /// Class i -> target i, targets named after the classes.
  static RemapTable identity(const std::vector<std::string>& class_names);
  void validate(int num_classes) const;
  int operator()(int cls) const;

  nlohmann::json to_json() const;
  /// {"targets": [...], "map": {"<class index>": "<target name>"}}
  static RemapTable from_json(const nlohmann::json& j);
};

struct BlockExtent {
  int x0, y0, width, height;
};

struct BlockMap {
  int rows = 0;
  int cols = 0;
  int block = 0;
  int origin_x = 0;
  int origin_y = 0;
  int raster_width = 0;
  int raster_height = 0;
  std::vector<std::string> targets;
  /// Row-major application category per block.
  std::vector<int> category;
  /// Row-major fine-grained prediction per block.
  std::vector<int> fine;

  int at(int row, int col) const { return category.at(static_cast<std::size_t>(row) * cols + col); }
  /// The block's pixels inside the raster (edge blocks are clipped).
  BlockExtent extent(int row, int col) const;

  nlohmann::json to_json() const;
  static BlockMap from_json(const nlohmann::json& j);
};

/// Concentric block, 3x and 5x context windows around block (row, col), edge-replicated.
SceneSample block_sample(const RgbImage& raster, int row, int col, int block);

/// Tiles the raster into ceil(W/block) x ceil(H/block) blocks and classifies each with context.
BlockMap map_region(const RgbImage& raster, const Model& model, const RemapTable& remap, int block);

/// (row, col) -> target category index.
using BlockAnnotations = std::map<std::pair<int, int>, int>;

BlockAnnotations annotations_from_json(const nlohmann::json& j, const std::vector<std::string>& targets);

/// OA/BA over the annotated blocks; BA covers the categories that have annotations.
MetricReport score_map(const BlockMap& map, const BlockAnnotations& annotations);

/// One color per block from a fixed palette, for inspection.
RgbImage render_block_map(const BlockMap& map, int pixels_per_block = 8);

}  // namespace catnet
