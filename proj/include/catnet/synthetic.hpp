#pragma once

#include "catnet/data_model.hpp"
#include "catnet/image.hpp"
#include "catnet/sample.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace catnet {

enum class PriorKind { uniform, zipf };

struct ClassPrior {
  PriorKind kind = PriorKind::uniform;
  double exponent = 1.0;

  /// P(class = k) for k in [0, num_classes); zipf gives p_k proportional to (k+1)^-exponent.
  std::vector<double> probabilities(int num_classes) const;
};

enum class Layout {
  scene,   ///< center motif + class landmark and distractors in the context annulus
  mosaic,  ///< 5x5 grid of class tiles; the label is the middle tile
};

/// Parameters of a procedurally generated scene-in-scene dataset.
///
/// Classes inside one ambiguity group share the same center-motif distribution,
/// so only the context annulus tells them apart. Motif geometry is expressed in
/// units of the center side, so any concentric 1:3:5 size renders the same world.
struct GeneratorSpec {
  int num_classes = 8;
  /// Partition of the classes; empty means every class is its own group.
  std::vector<std::vector<int>> ambiguity_groups;
  ClassPrior class_prior;
  /// Std of additive Gaussian pixel noise, in [0, 1] intensity units.
  double motif_noise = 0.05;
  /// Uniform prior: exact per-class count. Zipf: total = samples_per_class * num_classes, drawn i.i.d.
  int samples_per_class = 100;
  std::array<int, 3> image_sizes{32, 96, 160};
  std::uint64_t seed = 1;
  Layout layout = Layout::scene;
  /// Distractor blobs scattered over the context area (scene layout).
  int clutter = 0;

  void validate() const;
  /// The partition, with singleton groups filled in.
  std::vector<std::vector<int>> groups() const;
  std::vector<int> group_of_class() const;
};

/// num_classes classes where the first 2*pairs are grouped as {0,1}, {2,3}, ...
GeneratorSpec paired_spec(int num_classes, int pairs);

struct ProvenanceRecord {
  std::string sample_id;
  int cls = 0;
  int group = 0;
  int center_motif = 0;
  int context_motif = -1;
  std::uint64_t noise_seed = 0;
};

/// Renders one sample; bit-exact for fixed (class, spec, noise_seed).
SceneSample render_sample(int cls, const GeneratorSpec& spec, std::uint64_t noise_seed);

/// Class labels in generation order (deterministic in spec.seed).
std::vector<int> sample_labels(const GeneratorSpec& spec);
std::uint64_t sample_noise_seed(const GeneratorSpec& spec, std::size_t index);
std::string sample_id(std::size_t index);

/// All samples in memory, in generation order.
std::vector<SceneSample> generate_samples(const GeneratorSpec& spec, std::vector<ProvenanceRecord>* provenance = nullptr);

struct GeneratedDataset {
  DatasetManifest manifest;
  std::vector<ProvenanceRecord> provenance;
};

/// Writes rasters under out_dir/images, out_dir/manifest.jsonl and out_dir/provenance.jsonl.
GeneratedDataset generate_dataset(const GeneratorSpec& spec, const std::filesystem::path& out_dir);

/// Taxonomy whose parents are the ambiguity groups.
CategoryTaxonomy synthetic_taxonomy(const GeneratorSpec& spec);

/// Best achievable accuracy from the center scene alone:
/// sum over groups of max_{class in group} P(class).
double bayes_center_accuracy(const GeneratorSpec& spec);

/// A raster of class tiles (row-major class grid), each tile tile_px wide.
RgbImage render_mosaic(const GeneratorSpec& spec, const std::vector<std::vector<int>>& class_grid, int tile_px,
                       std::uint64_t seed);

void write_provenance(const std::vector<ProvenanceRecord>& records, const std::filesystem::path& path);

}  // namespace catnet
