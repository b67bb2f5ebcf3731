#pragma once

#include "catnet/sample.hpp"
#include "catnet/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace catnet {

struct Category {
  int id = 0;
  std::string name;
};

/// Two-level category tree: leaves (the classes) and their parents.
/// Class indices used by the model are positions in `leaves`.
struct CategoryTaxonomy {
  std::vector<Category> leaves;
  std::vector<Category> parents;
  std::map<int, int> leaf_to_parent;

  int num_classes() const { return static_cast<int>(leaves.size()); }
  /// Class index of a leaf id, or -1.
  int index_of_id(int leaf_id) const;
  int index_of_name(const std::string& name) const;
  void validate() const;

  /// Leaves "class_<i>" with a single parent.
  static CategoryTaxonomy flat(int num_classes);
};

enum class Split { train, val, test, none };

std::string to_string(Split split);
Split parse_split(const std::string& name);

/// Manifest entry: paths, not pixels.
struct SampleRef {
  std::string id;
  int label = -1;  ///< class index into taxonomy.leaves
  std::filesystem::path center;
  std::filesystem::path surrounding;
  std::filesystem::path global;
  Split split = Split::none;
  std::optional<double> lon;
  std::optional<double> lat;
};

struct DatasetManifest {
  CategoryTaxonomy taxonomy;
  /// Concentric raster sizes (center, surrounding, global), ratio 1:3:5.
  std::array<int, 3> sizes{256, 768, 1280};
  std::vector<SampleRef> samples;
  /// Directory relative raster paths resolve against.
  std::filesystem::path root;

  std::vector<const SampleRef*> in_split(Split split) const;
  std::vector<std::int64_t> class_counts(std::optional<Split> split = std::nullopt) const;
};

/// Manifest parse/validation failure; line() is 1-based (0 when not line-specific).
class ManifestError : public Error {
 public:
  ManifestError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

struct LoadOptions {
  bool check_files = true;
  /// Drop samples whose rasters are missing instead of failing.
  bool lenient = false;
};

DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {},
                              std::vector<std::string>* warnings = nullptr);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

void validate_sizes(const std::array<int, 3>& sizes);

/// Reads the three rasters of one entry and checks their sizes.
SceneSample load_sample(const DatasetManifest& manifest, const SampleRef& ref);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Per class of n samples: floor(val*n) val, floor(test*n) test, the rest train,
/// assigned by a seeded permutation of that class's samples.
DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

/// (lo, hi] sample-count interval with a bucket name.
struct CountBucket {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::string name;
};

struct BucketSpec {
  std::vector<CountBucket> buckets{{0, 1500, "few"}, {1500, 10000, "med"}, {10000, 150000, "many"}};

  void validate() const;
};

std::map<int, std::string> bucket_categories(const std::map<int, std::int64_t>& class_counts, const BucketSpec& spec);

}  // namespace catnet
