#include "catnet/model.hpp"

#include <cmath>

namespace catnet {

FusionKind parse_fusion(const std::string& name) {
  if (name == "cat") return FusionKind::cat;
  if (name == "input") return FusionKind::input_level;
  if (name == "feature") return FusionKind::feature_level;
  if (name == "decision") return FusionKind::decision_level;
  if (name == "center-only") return FusionKind::center_only;
  throw Error("unknown fusion kind: " + name + " (expected cat, input, feature, decision, center-only)");
}

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::cat: return "cat";
    case FusionKind::input_level: return "input";
    case FusionKind::feature_level: return "feature";
    case FusionKind::decision_level: return "decision";
    case FusionKind::center_only: return "center-only";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  encoder.validate();
  require(num_classes >= 2, "num_classes must be at least 2");
  require(adapter.bottleneck(encoder.embed_dim) >= 1, "adapter bottleneck must be >= 1");
  require(adapter.scale >= 0.0, "adapter scale must be nonnegative");
  if (fusion == FusionKind::cat) require(!mls || acf, "multi-level supervision requires ACF");
  const int heads = acf_heads > 0 ? acf_heads : encoder.num_heads;
  require(encoder.embed_dim % heads == 0, "ACF heads must divide embed_dim");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"input_resize", encoder.input_resize},
      {"patch_size", encoder.patch_size},
      {"embed_dim", encoder.embed_dim},
      {"depth", encoder.depth},
      {"num_heads", encoder.num_heads},
      {"window_size", encoder.window_size},
      {"mlp_ratio", encoder.mlp_ratio},
      {"adapter_bottleneck", adapter.bottleneck_dim},
      {"adapter_scale", adapter.scale},
      {"adapter_activation", to_string(adapter.activation)},
      {"num_classes", num_classes},
      {"fusion", to_string(fusion)},
      {"acf", acf},
      {"mls", mls},
      {"aft", aft},
      {"acf_heads", acf_heads},
      {"acf_query", acf_options.query == AcfQuery::pooled ? "pooled" : "tokens"},
      {"global_kv_with_surrounding", acf_options.global_kv_with_surrounding},
      {"seed", seed},
      {"backbone_seed", backbone_seed},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder.input_resize = j.at("input_resize");
  c.encoder.patch_size = j.at("patch_size");
  c.encoder.embed_dim = j.at("embed_dim");
  c.encoder.depth = j.at("depth");
  c.encoder.num_heads = j.at("num_heads");
  c.encoder.window_size = j.at("window_size");
  c.encoder.mlp_ratio = j.at("mlp_ratio");
  c.adapter.bottleneck_dim = j.at("adapter_bottleneck");
  c.adapter.scale = j.at("adapter_scale");
  c.adapter.activation = parse_activation(j.at("adapter_activation"));
  c.num_classes = j.at("num_classes");
  c.fusion = parse_fusion(j.at("fusion"));
  c.acf = j.at("acf");
  c.mls = j.at("mls");
  c.aft = j.at("aft");
  c.acf_heads = j.at("acf_heads");
  c.acf_options.query = j.at("acf_query") == "pooled" ? AcfQuery::pooled : AcfQuery::tokens;
  c.acf_options.global_kv_with_surrounding = j.at("global_kv_with_surrounding");
  c.seed = j.at("seed");
  c.backbone_seed = j.at("backbone_seed");
  return c;
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  c.validate();
  return c;
}

int encoder_channels(const ModelConfig& c) { return c.fusion == FusionKind::input_level ? 9 : 3; }

Vec onehot_residual(const Vec& p, int label, double weight) {
  Vec d = p;
  d[label] -= 1.0;
  return d * weight;
}

void add_pooled_grad(Mat& d_tokens, const Vec& d_pooled) {
  d_tokens.rowwise() += d_pooled.transpose() / static_cast<double>(d_tokens.rows());
}

}  // namespace

Model::Model(const ModelConfig& config)
    : config_(checked(config)),
      encoder_(config_.encoder, encoder_channels(config_), store_, config_.backbone_seed) {
  const int d = config_.encoder.embed_dim;
  const int classes = config_.num_classes;
  if (config_.aft) {
    if (config_.fusion == FusionKind::input_level) {
      adapters_.push_back(encoder_.make_adapters("fused", config_.adapter, store_, derive_seed(config_.seed, 10)));
    } else {
      for (Branch b : branches()) {
        adapters_.push_back(encoder_.make_adapters(std::string(to_string(b)), config_.adapter, store_,
                                                   derive_seed(config_.seed, 10 + static_cast<int>(b))));
      }
    }
  }
  if (config_.uses_acf()) {
    const int heads = config_.acf_heads > 0 ? config_.acf_heads : config_.encoder.num_heads;
    acf_ = make_acf_params(d, heads, store_, derive_seed(config_.seed, 20));
  }
  switch (config_.fusion) {
    case FusionKind::cat:
    case FusionKind::center_only:
      if (config_.center_only()) {
        head_c_ = make_head("c", d, classes, store_);
      } else {
        if (config_.mls) {
          head_c_ = make_head("c", d, classes, store_);
          head_s_ = make_head("s", 2 * d, classes, store_);
        }
        head_g_ = make_head("g", 3 * d, classes, store_);
      }
      break;
    case FusionKind::input_level: head_fused_ = make_head("fused", d, classes, store_); break;
    case FusionKind::feature_level: head_fused_ = make_head("fused", 3 * d, classes, store_); break;
    case FusionKind::decision_level:
      head_c_ = make_head("c", d, classes, store_);
      head_s_ = make_head("s", d, classes, store_);
      head_g_ = make_head("g", d, classes, store_);
      break;
  }
}

std::vector<Branch> Model::branches() const {
  if (config_.center_only() || config_.fusion == FusionKind::input_level) return {Branch::center};
  return {Branch::center, Branch::surrounding, Branch::global};
}

const AdapterSet* Model::adapters_for(Branch branch) const {
  if (adapters_.empty()) return nullptr;
  if (adapters_.size() == 1) return &adapters_.front();
  return &adapters_[static_cast<std::size_t>(branch)];
}

PatchMat Model::fused_patches(const PreparedSample& s) const {
  PatchMat out(s.center.rows(), s.center.cols() * 3);
  out << s.center, s.surrounding, s.global;
  return out;
}

BranchFeatures Model::encode_branch(const PatchMat& patches, Branch branch, EncoderCache* cache) const {
  BranchFeatures f;
  f.branch = branch;
  f.tokens = encoder_.forward(patches, adapters_for(branch), cache);
  f.pooled = mean_pool(f.tokens);
  return f;
}

std::vector<BranchFeatures> Model::encode(const PreparedSample& sample, std::vector<EncoderCache>* caches) const {
  const auto bs = branches();
  if (caches) caches->resize(bs.size());
  std::vector<BranchFeatures> out;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    EncoderCache* c = caches ? &(*caches)[i] : nullptr;
    if (config_.fusion == FusionKind::input_level) {
      out.push_back(encode_branch(fused_patches(sample), bs[i], c));
    } else {
      out.push_back(encode_branch(sample.branch(bs[i]), bs[i], c));
    }
  }
  return out;
}

ModelOutput Model::forward(const PreparedSample& sample, std::optional<int> label, ForwardCache* cache) const {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  auto features = encode(sample, &c.encoders);
  return forward_features(std::move(features), label, &c);
}

ModelOutput Model::forward_features(std::vector<BranchFeatures> features, std::optional<int> label,
                                    ForwardCache* cache) const {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  require(features.size() == branches().size(), "forward: wrong number of branch features");
  if (label) require(*label >= 0 && *label < config_.num_classes, "label " + std::to_string(*label) + " out of range");
  ModelOutput out;
  out.features = std::move(features);
  const auto& f = out.features;
  const int d = config_.encoder.embed_dim;

  if (config_.center_only()) {
    out.heads.logits_c = head_c_->logits(f[0].pooled);
    out.heads.p_c = softmax(*out.heads.logits_c);
    out.prediction = *out.heads.p_c;
    if (label) out.loss_all = total_loss(out.heads, *label);
  } else if (config_.fusion == FusionKind::cat) {
    out.fused = fuse(f[0], f[1], f[2], *acf_, config_.acf_options, &c.acf);
    if (config_.mls) {
      out.heads = predict_heads(f[0].pooled, out.fused->f_s_fused, out.fused->f_g_fused,
                                MlsHeads{*head_c_, *head_s_, *head_g_});
    } else {
      out.heads.logits_g = head_g_->logits(out.fused->f_g_fused);
      out.heads.p_g = softmax(*out.heads.logits_g);
    }
    out.prediction = *out.heads.p_g;
    out.attention_surrounding = c.acf.surrounding.weights;
    out.attention_global = c.acf.global.weights;
    if (label) out.loss_all = total_loss(out.heads, *label);
  } else if (config_.fusion == FusionKind::decision_level) {
    out.heads.logits_c = head_c_->logits(f[0].pooled);
    out.heads.logits_s = head_s_->logits(f[1].pooled);
    out.heads.logits_g = head_g_->logits(f[2].pooled);
    out.heads.p_c = softmax(*out.heads.logits_c);
    out.heads.p_s = softmax(*out.heads.logits_s);
    out.heads.p_g = softmax(*out.heads.logits_g);
    out.prediction = (*out.heads.p_c + *out.heads.p_s + *out.heads.p_g) / 3.0;
    if (label) {
      out.loss_fused = -std::log(out.prediction[*label]);
      out.loss_all = *out.loss_fused;
    }
  } else {
    if (config_.fusion == FusionKind::feature_level) {
      c.head_input.resize(3 * d);
      c.head_input << f[0].pooled, f[1].pooled, f[2].pooled;
    } else {
      c.head_input = f[0].pooled;
    }
    const Vec logits = head_fused_->logits(c.head_input);
    out.prediction = softmax(logits);
    if (label) {
      out.loss_fused = cross_entropy(logits, *label);
      out.loss_all = *out.loss_fused;
    }
  }
  out.predicted = argmax(out.prediction);
  return out;
}

void Model::backward(const ForwardCache& c, const ModelOutput& out, int label, double weight) {
  const auto& f = out.features;
  const int d = config_.encoder.embed_dim;
  std::vector<Mat> d_tokens;
  for (const auto& bf : f) d_tokens.push_back(Mat::Zero(bf.tokens.rows(), bf.tokens.cols()));

  if (config_.center_only()) {
    add_pooled_grad(d_tokens[0], head_c_->backward(f[0].pooled, onehot_residual(*out.heads.p_c, label, weight)));
  } else if (config_.fusion == FusionKind::cat) {
    const Vec d_fg = head_g_->backward(out.fused->f_g_fused, onehot_residual(*out.heads.p_g, label, weight));
    Vec d_fs = Vec::Zero(2 * d);
    Vec d_pc = Vec::Zero(d);
    if (config_.mls) {
      d_pc = head_c_->backward(f[0].pooled, onehot_residual(*out.heads.p_c, label, weight));
      d_fs = head_s_->backward(out.fused->f_s_fused, onehot_residual(*out.heads.p_s, label, weight));
    }
    FusedGradients g = fuse_backward(c.acf, *acf_, config_.acf_options, d, static_cast<int>(f[1].tokens.rows()),
                                     d_fs, d_fg);
    add_pooled_grad(d_tokens[0], g.d_center_pooled + d_pc);
    if (g.d_center_tokens.size() > 0) d_tokens[0] += g.d_center_tokens;
    d_tokens[1] += g.d_surrounding_tokens;
    d_tokens[2] += g.d_global_tokens;
  } else if (config_.fusion == FusionKind::decision_level) {
    // loss = -log(mean_i p_i[y]); dL/dp_i[y] = -1 / (3 * mean[y]).
    const double g = -weight / (3.0 * out.prediction[label]);
    const Vec* probs[3] = {&*out.heads.p_c, &*out.heads.p_s, &*out.heads.p_g};
    const Head* heads[3] = {&*head_c_, &*head_s_, &*head_g_};
    for (int i = 0; i < 3; ++i) {
      const Vec& p = *probs[i];
      Vec d_logits = -p * (p[label] * g);
      d_logits[label] += p[label] * g;
      add_pooled_grad(d_tokens[i], heads[i]->backward(f[i].pooled, d_logits));
    }
  } else {
    const Vec d_in = head_fused_->backward(c.head_input, onehot_residual(out.prediction, label, weight));
    if (config_.fusion == FusionKind::feature_level) {
      for (int i = 0; i < 3; ++i) add_pooled_grad(d_tokens[i], d_in.segment(i * d, d));
    } else {
      add_pooled_grad(d_tokens[0], d_in);
    }
  }

  if (adapters_.empty()) return;
  const auto bs = branches();
  for (std::size_t i = 0; i < bs.size(); ++i) encoder_.backward(c.encoders[i], adapters_for(bs[i]), d_tokens[i]);
}

std::int64_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::int64_t d = c.encoder.embed_dim;
  const std::int64_t classes = c.num_classes;
  const std::int64_t b = c.adapter.bottleneck(c.encoder.embed_dim);
  std::int64_t n = backbone_parameter_count(c.encoder, c.fusion == FusionKind::input_level ? 9 : 3);
  std::int64_t adapter_sets = 0;
  if (c.aft) adapter_sets = (c.center_only() || c.fusion == FusionKind::input_level) ? 1 : 3;
  n += adapter_sets * c.encoder.depth * (d * b + b + b * d + d);
  if (c.uses_acf()) n += 2 * 4 * (d * d + d);
  auto head = [&](std::int64_t in) { return in * classes + classes; };
  switch (c.fusion) {
    case FusionKind::cat:
    case FusionKind::center_only:
      if (c.center_only()) n += head(d);
      else n += (c.mls ? head(d) + head(2 * d) : 0) + head(3 * d);
      break;
    case FusionKind::input_level: n += head(d); break;
    case FusionKind::feature_level: n += head(3 * d); break;
    case FusionKind::decision_level: n += 3 * head(d); break;
  }
  return n;
}

}  // namespace catnet
