#include "catnet/layers.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace catnet {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  throw Error("unknown activation: " + name);
}

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "gelu"; }

namespace {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Mat activate(const Mat& x, Activation act) {
  if (act == Activation::relu) return x.cwiseMax(0.0);
  return x.unaryExpr([](double v) { return gelu(v); });
}

Mat activate_grad(const Mat& pre, Activation act) {
  if (act == Activation::relu) return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return pre.unaryExpr([](double v) { return gelu_grad(v); });
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * weight->value;
  y.rowwise() += bias->value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) const {
  if (weight->trainable()) weight->grad.noalias() += x.transpose() * dy;
  if (bias->trainable()) bias->grad.row(0) += dy.colwise().sum();
  return dy * weight->value.transpose();
}

Mat LayerNorm::forward(const Mat& x, LayerNormCache* cache) const {
  const auto n = x.rows();
  const double d = static_cast<double>(x.cols());
  LayerNormCache local;
  LayerNormCache& c = cache ? *cache : local;
  c.xhat.resize(n, x.cols());
  c.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().sum() / d;
    c.rstd[i] = 1.0 / std::sqrt(var + eps);
    c.xhat.row(i) = centered * c.rstd[i];
  }
  Mat y = c.xhat.array().rowwise() * gamma->value.row(0).array();
  y.rowwise() += beta->value.row(0);
  return y;
}

Mat LayerNorm::backward(const LayerNormCache& cache, const Mat& dy) const {
  if (gamma->trainable()) gamma->grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (beta->trainable()) beta->grad.row(0) += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gamma->value.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.rstd[i] *
                (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat);
  }
  return dx;
}

WindowGeometry make_window_geometry(int grid, int window, int shift) {
  require(grid > 0 && window > 0 && grid % window == 0, "token grid must be divisible by window size");
  if (window == grid) shift = 0;
  require(shift >= 0 && shift < window, "shift must lie in [0, window)");
  WindowGeometry g;
  g.grid = grid;
  g.window = window;
  g.shift = shift;
  const int per_side = grid / window;
  const int m = window * window;
  const int span = 2 * window - 1;
  auto region = [&](int s) {
    if (shift == 0) return 0;
    if (s < grid - window) return 0;
    if (s < grid - shift) return 1;
    return 2;
  };
  for (int wy = 0; wy < per_side; ++wy) {
    for (int wx = 0; wx < per_side; ++wx) {
      std::vector<int> ids(m);
      std::vector<int> labels(m);
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          const int sy = wy * window + i;
          const int sx = wx * window + j;
          // Cyclic shift: shifted position s holds original token (s + shift) mod grid.
          const int oy = (sy + shift) % grid;
          const int ox = (sx + shift) % grid;
          ids[i * window + j] = oy * grid + ox;
          labels[i * window + j] = 3 * region(sy) + region(sx);
        }
      }
      Eigen::MatrixXi index(m, m);
      for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) {
          if (labels[a] != labels[b]) {
            index(a, b) = -1;
            continue;
          }
          const int dy = a / window - b / window + window - 1;
          const int dx = a % window - b % window + window - 1;
          index(a, b) = dy * span + dx;
        }
      }
      g.windows.push_back(std::move(ids));
      g.bias_index.push_back(std::move(index));
    }
  }
  return g;
}

Mat WindowAttention::forward(const Mat& x, AttentionCache* cache) const {
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  const auto n = x.rows();
  const auto d = x.cols();
  const int hd = static_cast<int>(d) / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  c.qkv = qkv.forward(x);
  c.heads_out = Mat::Zero(n, d);
  c.attn.assign(geometry->windows.size() * num_heads, Mat());
  for (std::size_t w = 0; w < geometry->windows.size(); ++w) {
    const auto& ids = geometry->windows[w];
    const auto& index = geometry->bias_index[w];
    const int m = static_cast<int>(ids.size());
    for (int h = 0; h < num_heads; ++h) {
      Mat q(m, hd), k(m, hd), v(m, hd);
      for (int i = 0; i < m; ++i) {
        q.row(i) = c.qkv.block(ids[i], h * hd, 1, hd);
        k.row(i) = c.qkv.block(ids[i], d + h * hd, 1, hd);
        v.row(i) = c.qkv.block(ids[i], 2 * d + h * hd, 1, hd);
      }
      Mat logits = (q * k.transpose()) * scale;
      Mat a(m, m);
      for (int i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j) {
          if (index(i, j) < 0) continue;
          logits(i, j) += rel_bias->value(index(i, j), h);
          mx = std::max(mx, logits(i, j));
        }
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
          a(i, j) = index(i, j) < 0 ? 0.0 : std::exp(logits(i, j) - mx);
          sum += a(i, j);
        }
        a.row(i) /= sum;
      }
      Mat o = a * v;
      for (int i = 0; i < m; ++i) c.heads_out.block(ids[i], h * hd, 1, hd) = o.row(i);
      c.attn[w * num_heads + h] = std::move(a);
    }
  }
  return proj.forward(c.heads_out);
}

Mat WindowAttention::backward(const Mat& x, const AttentionCache& c, const Mat& dy) const {
  const auto d = x.cols();
  const int hd = static_cast<int>(d) / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Mat d_heads = proj.backward(c.heads_out, dy);
  Mat d_qkv = Mat::Zero(x.rows(), 3 * d);
  for (std::size_t w = 0; w < geometry->windows.size(); ++w) {
    const auto& ids = geometry->windows[w];
    const int m = static_cast<int>(ids.size());
    for (int h = 0; h < num_heads; ++h) {
      const Mat& a = c.attn[w * num_heads + h];
      Mat q(m, hd), k(m, hd), v(m, hd), d_o(m, hd);
      for (int i = 0; i < m; ++i) {
        q.row(i) = c.qkv.block(ids[i], h * hd, 1, hd);
        k.row(i) = c.qkv.block(ids[i], d + h * hd, 1, hd);
        v.row(i) = c.qkv.block(ids[i], 2 * d + h * hd, 1, hd);
        d_o.row(i) = d_heads.block(ids[i], h * hd, 1, hd);
      }
      const Mat d_a = d_o * v.transpose();
      const Mat d_v = a.transpose() * d_o;
      Mat d_logits = a.array() * (d_a.colwise() - (a.array() * d_a.array()).rowwise().sum().matrix()).array();
      const Mat d_q = (d_logits * k) * scale;
      const Mat d_k = (d_logits.transpose() * q) * scale;
      for (int i = 0; i < m; ++i) {
        d_qkv.block(ids[i], h * hd, 1, hd) += d_q.row(i);
        d_qkv.block(ids[i], d + h * hd, 1, hd) += d_k.row(i);
        d_qkv.block(ids[i], 2 * d + h * hd, 1, hd) += d_v.row(i);
      }
    }
  }
  return qkv.backward(x, d_qkv);
}

Mat AdaptMlp::forward(const Mat& x, const Adapter* adapter, MlpCache* cache) const {
  MlpCache local;
  MlpCache& c = cache ? *cache : local;
  c.hidden_pre = fc1.forward(x);
  c.hidden = activate(c.hidden_pre, Activation::gelu);
  Mat y = fc2.forward(c.hidden);
  if (adapter) {
    c.adapter_pre = adapter->down.forward(x);
    c.adapter_hidden = activate(c.adapter_pre, adapter->act);
    y += adapter->scale * adapter->up.forward(c.adapter_hidden);
  }
  return y;
}

Mat AdaptMlp::backward(const Mat& x, const Adapter* adapter, const MlpCache& c, const Mat& dy) const {
  const Mat d_hidden = fc2.backward(c.hidden, dy);
  const Mat d_hidden_pre = d_hidden.cwiseProduct(activate_grad(c.hidden_pre, Activation::gelu));
  Mat dx = fc1.backward(x, d_hidden_pre);
  if (adapter) {
    const Mat d_adapter_hidden = adapter->up.backward(c.adapter_hidden, adapter->scale * dy);
    const Mat d_adapter_pre = d_adapter_hidden.cwiseProduct(activate_grad(c.adapter_pre, adapter->act));
    dx += adapter->down.backward(x, d_adapter_pre);
  }
  return dx;
}

Mat TransformerBlock::forward(const Mat& x, const Adapter* adapter, BlockCache* cache) const {
  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  c.input = x;
  c.attn_in = ln1.forward(x, &c.ln1);
  c.mid = x + attn.forward(c.attn_in, &c.attn);
  c.mlp_in = ln2.forward(c.mid, &c.ln2);
  return c.mid + mlp.forward(c.mlp_in, adapter, &c.mlp);
}

Mat TransformerBlock::backward(const BlockCache& c, const Adapter* adapter, const Mat& dy) const {
  Mat d_mid = dy + ln2.backward(c.ln2, mlp.backward(c.mlp_in, adapter, c.mlp, dy));
  return d_mid + ln1.backward(c.ln1, attn.backward(c.attn_in, c.attn, d_mid));
}

}  // namespace catnet
