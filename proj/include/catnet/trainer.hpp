#pragma once

#include "catnet/data_model.hpp"
#include "catnet/metrics.hpp"
#include "catnet/model.hpp"
#include "catnet/synthetic.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace catnet {

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Values are rounded to float32 after each step.
class Adam {
 public:
  Adam(std::vector<Param*> params, const AdamConfig& config);
  void step();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig config_;
  std::vector<Mat> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  int batch_size = 16;
  /// Total optimizer steps. When epochs > 0 it overrides steps.
  int steps = 200;
  int epochs = 0;
  /// Validation cadence in steps; 0 means once per pass over the training set.
  int eval_every = 0;
  /// Seeds the data order.
  std::uint64_t seed = 1;
  std::string profile = "toy";

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  std::optional<double> loss_c, loss_s, loss_g, loss_fused;
  /// Sum of the populated loss columns.
  double loss_all = 0.0;
};

struct EvalRecord {
  int step = 0;
  int epoch = 0;
  MetricReport val;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  double seconds_per_sample = 0.0;
  std::int64_t params_total = 0;
  std::int64_t params_trainable = 0;
  int best_step = 0;
  double best_val_ba = -1.0;

  /// One JSON object per line: a "run" header, then "step" and "eval" records.
  void write_jsonl(const std::filesystem::path& path) const;
};

struct TrainResult {
  /// Parameters at the best validation BA (initialization when no step was taken).
  Model model;
  RunLog log;
};

/// Observes each record as it is produced.
using StepCallback = std::function<void(const StepRecord&)>;

TrainResult train(const TrainConfig& config, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& val_set, const StepCallback& on_step = nullptr);

struct Evaluation {
  MetricReport report;
  std::vector<int> predictions;
  std::vector<int> labels;
  /// Samples whose prediction equals argmax of the global head (CAT with ACF), or of
  /// the model's final distribution otherwise.
  std::int64_t rule_agreements = 0;
  bool has_global_head = false;
};

Evaluation evaluate(const Model& model, const std::vector<PreparedSample>& samples,
                    const ReportOptions& options = {});

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Lower bound on the relative-error denominator; parameters whose true
  /// gradient is exactly zero otherwise report pure roundoff.
  double floor = 1e-4;
  /// 0 checks every coordinate; otherwise a seeded subsample of this many (at least 200).
  int max_coordinates = 0;
  std::uint64_t seed = 1;
  /// Mutation hook: negate this parameter's analytic gradient before comparing.
  std::string negate_parameter;
};

struct GradCheckEntry {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> flagged;
  bool passed() const { return flagged.empty(); }
};

/// Redraws every trainable parameter from N(0, std^2). Zero-initialized heads
/// otherwise hide all upstream gradients from a gradient check.
void randomize_trainable(Model& model, double std, std::uint64_t seed);

GradCheckReport gradient_check(Model& model, const PreparedSample& sample, int label,
                               const GradCheckOptions& options = {});

struct BranchScores {
  std::optional<double> center, surrounding, global;
};

/// p[label] of each present head from one forward pass.
BranchScores branch_scores(const Model& model, const PreparedSample& sample, int label);

struct FeatureRow {
  std::string id;
  int label = -1;
  std::vector<float> center;     // d
  std::vector<float> surrounding_fused;  // 2d
  std::vector<float> global_fused;       // 3d
};

std::vector<FeatureRow> export_features(const Model& model, const std::vector<PreparedSample>& samples);
/// CSV: id,label,c_0..c_{d-1},s_0..s_{2d-1},g_0..g_{3d-1}; floats printed to round-trip float32.
void write_features_csv(const std::vector<FeatureRow>& rows, const std::filesystem::path& path);

struct AttentionExport {
  std::string id;
  /// Per head: weights over context tokens (one query row).
  std::vector<std::vector<double>> surrounding;
  std::vector<std::vector<double>> global;
  nlohmann::json to_json() const;
};

AttentionExport export_attention(const Model& model, const PreparedSample& sample);

/// Loads and prepares every sample of one split.
std::vector<PreparedSample> prepare_split(const DatasetManifest& manifest, Split split, const EncoderConfig& config);

/// Synthetic benchmark: generate with `spec`, split 60/20/20 by `split_seed`, prepare.
struct PreparedData {
  std::vector<PreparedSample> train, val, test;
};
PreparedData prepare_synthetic(const GeneratorSpec& spec, const EncoderConfig& config, std::uint64_t split_seed);

}  // namespace catnet
