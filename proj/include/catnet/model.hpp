#pragma once

#include "catnet/acf.hpp"
#include "catnet/encoder.hpp"
#include "catnet/heads.hpp"
#include "catnet/params.hpp"
#include "catnet/sample.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace catnet {

enum class FusionKind { cat, input_level, feature_level, decision_level, center_only };

FusionKind parse_fusion(const std::string& name);
std::string to_string(FusionKind kind);

struct ModelConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  int num_classes = 8;
  FusionKind fusion = FusionKind::cat;
  /// Ablation switches (CAT only). acf=false gives the center-only model.
  bool acf = true;
  bool mls = true;
  bool aft = true;
  /// 0 selects the backbone head count.
  int acf_heads = 0;
  AcfOptions acf_options;
  /// Seeds the trainable parameters (adapters, ACF).
  std::uint64_t seed = 1;
  /// Seeds the frozen backbone.
  std::uint64_t backbone_seed = 1;

  void validate() const;
  bool uses_acf() const { return fusion == FusionKind::cat && acf; }
  bool center_only() const { return fusion == FusionKind::center_only || (fusion == FusionKind::cat && !acf); }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Everything one forward pass produces.
struct ModelOutput {
  HeadOutputs heads;
  /// Single supervised output of the baselines (input/feature/decision level).
  std::optional<double> loss_fused;
  double loss_all = 0.0;
  /// Final predictive distribution and its argmax.
  Vec prediction;
  int predicted = -1;
  std::vector<BranchFeatures> features;
  std::optional<FusedFeatures> fused;
  /// Per-head ACF weights over context tokens (empty for non-ACF models).
  std::vector<Mat> attention_surrounding;
  std::vector<Mat> attention_global;
};

struct ForwardCache {
  std::vector<EncoderCache> encoders;
  AcfCache acf;
  /// Per-branch probabilities kept for the decision-level backward pass.
  std::vector<Vec> branch_probs;
  Vec head_input;
};

/// The CAT model and the comparison fusion baselines on a shared frozen backbone.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Adapters, ACF and heads; never a backbone parameter.
  std::vector<Param*> trainable_parameters() { return store_.trainable(); }

  /// Branches the model encodes, in order (input-level has a single fused branch).
  std::vector<Branch> branches() const;

  /// Encodes one branch's patches with that branch's adapter set.
  BranchFeatures encode_branch(const PatchMat& patches, Branch branch, EncoderCache* cache = nullptr) const;
  std::vector<BranchFeatures> encode(const PreparedSample& sample, std::vector<EncoderCache>* caches) const;

  /// Full forward pass. With a label, losses are filled in.
  ModelOutput forward(const PreparedSample& sample, std::optional<int> label = std::nullopt,
                      ForwardCache* cache = nullptr) const;
  /// Forward from precomputed branch features (valid when adapters are absent).
  ModelOutput forward_features(std::vector<BranchFeatures> features, std::optional<int> label,
                               ForwardCache* cache) const;

  /// Accumulates weight * d(loss_all)/d(theta) into the trainable gradients.
  void backward(const ForwardCache& cache, const ModelOutput& out, int label, double weight);

  /// True when branch features do not depend on trainable parameters.
  bool features_frozen() const { return adapters_.empty(); }

  const Encoder& encoder() const { return encoder_; }
  const AcfParams* acf() const { return acf_ ? &*acf_ : nullptr; }

 private:
  const AdapterSet* adapters_for(Branch branch) const;
  PatchMat fused_patches(const PreparedSample& sample) const;

  ModelConfig config_;
  ParamStore store_;
  Encoder encoder_;
  std::vector<AdapterSet> adapters_;
  std::optional<AcfParams> acf_;
  std::optional<Head> head_c_, head_s_, head_g_, head_fused_;
};

/// Parameter count of a model built from `config`, by construction.
std::int64_t parameter_count(const ModelConfig& config);

}  // namespace catnet
