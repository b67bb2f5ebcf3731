#include "catnet/encoder.hpp"

#include <cmath>
#include <random>

namespace catnet {

std::string_view to_string(Branch branch) {
  switch (branch) {
    case Branch::center: return "center";
    case Branch::surrounding: return "surrounding";
    case Branch::global: return "global";
  }
  return "unknown";
}

void EncoderConfig::validate() const {
  require(input_resize > 0 && patch_size > 0 && input_resize % patch_size == 0,
          "input_resize must be a positive multiple of patch_size");
  require(embed_dim > 0 && num_heads > 0 && embed_dim % num_heads == 0,
          "embed_dim must be divisible by num_heads");
  require(depth > 0 && depth % 2 == 0, "depth must be even (W-MSA/SW-MSA pairs)");
  require(window_size > 0 && grid() % window_size == 0, "token grid must be divisible by window_size");
  require(mlp_ratio > 0, "mlp_ratio must be positive");
}

namespace {

Linear make_linear(ParamStore& store, const std::string& prefix, ParamGroup group, int in, int out) {
  return Linear{store.add(prefix + ".weight", group, in, out), store.add(prefix + ".bias", group, 1, out)};
}

LayerNorm make_norm(ParamStore& store, const std::string& prefix, int dim) {
  LayerNorm ln{store.add(prefix + ".gamma", ParamGroup::backbone, 1, dim),
               store.add(prefix + ".beta", ParamGroup::backbone, 1, dim)};
  ln.gamma->value.setOnes();
  return ln;
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config, int in_channels, ParamStore& store, std::uint64_t seed)
    : config_(config), in_channels_(in_channels) {
  config_.validate();
  require(in_channels > 0 && in_channels % 3 == 0, "encoder channels must be a multiple of 3");
  const int d = config_.embed_dim;
  const int hidden = d * config_.mlp_ratio;
  const int rgb_dim = config_.patch_dim(3);
  std::mt19937_64 rng(seed);

  patch_embed_ = make_linear(store, "backbone.patch_embed", ParamGroup::backbone, config_.patch_dim(in_channels), d);
  Mat rgb_weight(rgb_dim, d);
  fill_normal(rgb_weight, 1.0 / std::sqrt(static_cast<double>(rgb_dim)), rng);
  const int copies = in_channels / 3;
  for (int k = 0; k < copies; ++k)
    patch_embed_.weight->value.middleRows(k * rgb_dim, rgb_dim) = rgb_weight / static_cast<double>(copies);
  quantize_to_float(patch_embed_.weight->value);

  pos_embed_ = store.add("backbone.pos_embed", ParamGroup::backbone, config_.num_tokens(), d);
  fill_normal(pos_embed_->value, 0.1, rng);

  const int grid = config_.grid();
  const int window = std::min(config_.window_size, grid);
  geometries_.reserve(2);
  geometries_.push_back(make_window_geometry(grid, window, 0));
  geometries_.push_back(make_window_geometry(grid, window, window == grid ? 0 : window / 2));
  const int span = 2 * window - 1;

  for (int b = 0; b < config_.depth; ++b) {
    const std::string prefix = "backbone.blocks." + std::to_string(b);
    TransformerBlock block;
    block.ln1 = make_norm(store, prefix + ".ln1", d);
    block.attn.qkv = make_linear(store, prefix + ".attn.qkv", ParamGroup::backbone, d, 3 * d);
    block.attn.proj = make_linear(store, prefix + ".attn.proj", ParamGroup::backbone, d, d);
    block.attn.rel_bias = store.add(prefix + ".attn.rel_bias", ParamGroup::backbone, span * span, config_.num_heads);
    block.attn.num_heads = config_.num_heads;
    block.attn.geometry = &geometries_[b % 2];
    block.ln2 = make_norm(store, prefix + ".ln2", d);
    block.mlp.fc1 = make_linear(store, prefix + ".mlp.fc1", ParamGroup::backbone, d, hidden);
    block.mlp.fc2 = make_linear(store, prefix + ".mlp.fc2", ParamGroup::backbone, hidden, d);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    fill_normal(block.attn.qkv.weight->value, inv_sqrt_d, rng);
    fill_normal(block.attn.proj.weight->value, inv_sqrt_d, rng);
    fill_normal(block.attn.rel_bias->value, 0.02, rng);
    fill_normal(block.mlp.fc1.weight->value, inv_sqrt_d, rng);
    fill_normal(block.mlp.fc2.weight->value, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    blocks_.push_back(block);
  }
}

AdapterSet Encoder::make_adapters(const std::string& name, const AdapterConfig& config, ParamStore& store,
                                  std::uint64_t seed) const {
  const int d = config_.embed_dim;
  const int b = config.bottleneck(d);
  std::mt19937_64 rng(seed);
  AdapterSet set;
  set.name = name;
  for (int i = 0; i < config_.depth; ++i) {
    const std::string prefix = "adapter." + name + ".blocks." + std::to_string(i);
    Adapter adapter;
    adapter.down = make_linear(store, prefix + ".down", ParamGroup::adapter, d, b);
    adapter.up = make_linear(store, prefix + ".up", ParamGroup::adapter, b, d);
    adapter.scale = config.scale;
    adapter.act = config.activation;
    fill_normal(adapter.down.weight->value, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    set.blocks.push_back(adapter);
  }
  return set;
}

Mat Encoder::forward(const PatchMat& patches, const AdapterSet* adapters, EncoderCache* cache) const {
  require(patches.rows() == config_.num_tokens() && patches.cols() == config_.patch_dim(in_channels_),
          "input patches do not match the encoder configuration");
  Mat x = patch_embed_.forward(patches.cast<double>());
  x += pos_embed_->value;
  if (cache) {
    cache->embedded = x;
    cache->blocks.resize(blocks_.size());
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Adapter* adapter = adapters ? &adapters->blocks[b] : nullptr;
    x = blocks_[b].forward(x, adapter, cache ? &cache->blocks[b] : nullptr);
  }
  return x;
}

void Encoder::backward(const EncoderCache& cache, const AdapterSet* adapters, const Mat& d_tokens) const {
  if (!adapters) return;
  Mat d = d_tokens;
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    d = blocks_[b].backward(cache.blocks[b], &adapters->blocks[b], d);
  }
}

Mat adapt_mlp(const Mat& x, const AdaptMlp& frozen_mlp, const Adapter* adapter) {
  return frozen_mlp.forward(x, adapter, nullptr);
}

Vec mean_pool(const Mat& tokens) { return tokens.colwise().mean().transpose(); }

std::int64_t backbone_parameter_count(const EncoderConfig& c, int in_channels) {
  const std::int64_t d = c.embed_dim;
  const std::int64_t hidden = d * c.mlp_ratio;
  const std::int64_t w = std::min(c.window_size, c.grid());
  const std::int64_t span = 2 * w - 1;
  const std::int64_t per_block = 2 * (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) + span * span * c.num_heads +
                                 (d * hidden + hidden) + (hidden * d + d);
  return static_cast<std::int64_t>(c.patch_dim(in_channels)) * d + d + c.num_tokens() * d + c.depth * per_block;
}

}  // namespace catnet
