#pragma once

#include "catnet/layers.hpp"
#include "catnet/params.hpp"
#include "catnet/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace catnet {

enum class Branch { center = 0, surrounding = 1, global = 2 };

inline constexpr std::array<Branch, 3> kBranches{Branch::center, Branch::surrounding, Branch::global};

std::string_view to_string(Branch branch);

struct EncoderConfig {
  int input_resize = 32;
  int patch_size = 4;
  int embed_dim = 16;
  /// Number of transformer blocks; blocks alternate W-MSA / SW-MSA so this is even.
  int depth = 2;
  int num_heads = 2;
  /// Window side in tokens; equal to the token grid side gives plain attention.
  int window_size = 4;
  int mlp_ratio = 8;

  int grid() const { return input_resize / patch_size; }
  int num_tokens() const { return grid() * grid(); }
  int patch_dim(int channels) const { return patch_size * patch_size * channels; }
  void validate() const;
};

struct AdapterConfig {
  /// 0 selects embed_dim / 4.
  int bottleneck_dim = 0;
  double scale = 0.1;
  Activation activation = Activation::relu;

  int bottleneck(int embed_dim) const { return bottleneck_dim > 0 ? bottleneck_dim : std::max(1, embed_dim / 4); }
};

/// One adapter per transformer block.
struct AdapterSet {
  std::string name;
  std::vector<Adapter> blocks;
};

struct BranchFeatures {
  Branch branch = Branch::center;
  Mat tokens;
  Vec pooled;
};

struct EncoderCache {
  Mat embedded;
  std::vector<BlockCache> blocks;
};

/// Patch embedding + learned absolute position table + transformer blocks.
/// All of it is frozen backbone; only the adapter sets train.
class Encoder {
 public:
  /// Registers backbone parameters under "backbone." and draws them from `seed`.
  /// With in_channels = 3k (k > 1) the patch embedding is the 3-channel draw
  /// repeated k times and divided by k.
  Encoder(const EncoderConfig& config, int in_channels, ParamStore& store, std::uint64_t seed);
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;
  Encoder(Encoder&&) = default;
  Encoder& operator=(Encoder&&) = default;

  /// Registers an adapter set "adapter.<name>." (down ~ N(0, 1/d), up = 0).
  AdapterSet make_adapters(const std::string& name, const AdapterConfig& config, ParamStore& store,
                           std::uint64_t seed) const;

  Mat forward(const PatchMat& patches, const AdapterSet* adapters, EncoderCache* cache) const;
  /// Backpropagates token gradients into the adapter parameters.
  void backward(const EncoderCache& cache, const AdapterSet* adapters, const Mat& d_tokens) const;

  const EncoderConfig& config() const { return config_; }
  int in_channels() const { return in_channels_; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }

 private:
  EncoderConfig config_;
  int in_channels_;
  Linear patch_embed_;
  Param* pos_embed_ = nullptr;
  std::vector<WindowGeometry> geometries_;
  std::vector<TransformerBlock> blocks_;
};

/// FrozenMLP(x) + s * Up(act(Down(x))).
Mat adapt_mlp(const Mat& x, const AdaptMlp& frozen_mlp, const Adapter* adapter);

/// Mean over tokens.
Vec mean_pool(const Mat& tokens);

/// Backbone parameter count of a standalone 3-channel encoder, from shapes alone.
std::int64_t backbone_parameter_count(const EncoderConfig& config, int in_channels = 3);

}  // namespace catnet
