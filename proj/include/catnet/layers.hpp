#pragma once

#include "catnet/params.hpp"
#include "catnet/tensor.hpp"

#include <string>
#include <vector>

namespace catnet {

enum class Activation { relu, gelu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);

Mat activate(const Mat& x, Activation act);
/// Elementwise derivative of the activation evaluated at the pre-activation.
Mat activate_grad(const Mat& pre, Activation act);

/// Row-wise affine map y = x W + b with W stored (in x out).
struct Linear {
  Param* weight = nullptr;
  Param* bias = nullptr;

  Mat forward(const Mat& x) const;
  /// Accumulates parameter gradients when the parameters are trainable.
  Mat backward(const Mat& x, const Mat& dy) const;
};

struct LayerNormCache {
  Mat xhat;
  Vec rstd;
};

struct LayerNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  double eps = 1e-5;

  Mat forward(const Mat& x, LayerNormCache* cache) const;
  Mat backward(const LayerNormCache& cache, const Mat& dy) const;
};

/// Token layout of (shifted) windows on a square grid. Window membership and
/// the cross-region mask of shifted windows are precomputed once per geometry.
struct WindowGeometry {
  int grid = 0;
  int window = 0;
  int shift = 0;
  /// Token ids (row-major grid order) of each window.
  std::vector<std::vector<int>> windows;
  /// Per window, M x M index into the relative position table; -1 where masked.
  std::vector<Eigen::MatrixXi> bias_index;
};

WindowGeometry make_window_geometry(int grid, int window, int shift);

struct AttentionCache {
  Mat qkv;
  /// attn[w * heads + h]: softmax weights of window w, head h.
  std::vector<Mat> attn;
  Mat heads_out;
};

/// Multi-head self attention restricted to (shifted) windows, with a learned
/// relative position bias table of shape ((2w-1)^2 x heads).
struct WindowAttention {
  Linear qkv;
  Linear proj;
  Param* rel_bias = nullptr;
  int num_heads = 1;
  const WindowGeometry* geometry = nullptr;

  Mat forward(const Mat& x, AttentionCache* cache) const;
  Mat backward(const Mat& x, const AttentionCache& cache, const Mat& dy) const;
};

/// Parallel bottleneck adapter: scale * up(act(down(x))).
struct Adapter {
  Linear down;
  Linear up;
  double scale = 0.1;
  Activation act = Activation::relu;
};

struct MlpCache {
  Mat hidden_pre;
  Mat hidden;
  Mat adapter_pre;
  Mat adapter_hidden;
};

/// Frozen two-layer GELU MLP plus an optional adapter (the AdaptMLP form).
struct AdaptMlp {
  Linear fc1;
  Linear fc2;

  Mat forward(const Mat& x, const Adapter* adapter, MlpCache* cache) const;
  Mat backward(const Mat& x, const Adapter* adapter, const MlpCache& cache, const Mat& dy) const;
};

struct BlockCache {
  Mat input;
  LayerNormCache ln1;
  Mat attn_in;
  AttentionCache attn;
  Mat mid;
  LayerNormCache ln2;
  Mat mlp_in;
  MlpCache mlp;
};

/// One pre-norm transformer block: x + Attn(LN(x)), then + MLP_AFT(LN(.)).
struct TransformerBlock {
  LayerNorm ln1;
  WindowAttention attn;
  LayerNorm ln2;
  AdaptMlp mlp;

  Mat forward(const Mat& x, const Adapter* adapter, BlockCache* cache) const;
  Mat backward(const BlockCache& cache, const Adapter* adapter, const Mat& dy) const;
};

}  // namespace catnet
