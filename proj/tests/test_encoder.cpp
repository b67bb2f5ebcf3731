#include "catnet/encoder.hpp"
#include "catnet/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace catnet;

namespace {

Mat random_mat(int r, int c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

PatchMat random_patches(const EncoderConfig& cfg, int channels, std::uint64_t seed) {
  return random_mat(cfg.num_tokens(), cfg.patch_dim(channels), seed).cast<float>();
}

// Naive per-element reference for one pre-norm block with full attention over all tokens.
std::vector<std::vector<double>> reference_block(const std::vector<std::vector<double>>& x, const TransformerBlock& blk,
                                                 const Adapter* adapter) {
  const int n = static_cast<int>(x.size()), d = static_cast<int>(x[0].size());
  const int heads = blk.attn.num_heads, hd = d / heads, w = blk.attn.geometry->window;
  auto W = [](const Param* p, int i, int j) { return p->value(i, j); };
  auto layer_norm = [&](const std::vector<std::vector<double>>& in, const LayerNorm& ln) {
    auto out = in;
    for (int t = 0; t < n; ++t) {
      double mu = 0, var = 0;
      for (int k = 0; k < d; ++k) mu += in[t][k] / d;
      for (int k = 0; k < d; ++k) var += (in[t][k] - mu) * (in[t][k] - mu) / d;
      for (int k = 0; k < d; ++k)
        out[t][k] = (in[t][k] - mu) / std::sqrt(var + 1e-5) * W(ln.gamma, 0, k) + W(ln.beta, 0, k);
    }
    return out;
  };
  auto linear = [&](const std::vector<double>& in, const Linear& l) {
    const int out_dim = static_cast<int>(l.weight->value.cols());
    std::vector<double> y(out_dim);
    for (int j = 0; j < out_dim; ++j) {
      y[j] = W(l.bias, 0, j);
      for (std::size_t i = 0; i < in.size(); ++i) y[j] += in[i] * W(l.weight, static_cast<int>(i), j);
    }
    return y;
  };
  const auto h1 = layer_norm(x, blk.ln1);
  std::vector<std::vector<double>> qkv(n);
  for (int t = 0; t < n; ++t) qkv[t] = linear(h1[t], blk.attn.qkv);
  std::vector<std::vector<double>> att(n, std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> logit(n);
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < hd; ++k) s += qkv[i][h * hd + k] * qkv[j][d + h * hd + k];
        const int dy = i / w - j / w + w - 1, dx = i % w - j % w + w - 1;
        logit[j] = s / std::sqrt(static_cast<double>(hd)) + W(blk.attn.rel_bias, dy * (2 * w - 1) + dx, h);
        mx = std::max(mx, logit[j]);
      }
      double z = 0;
      for (int j = 0; j < n; ++j) z += std::exp(logit[j] - mx);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < hd; ++k) att[i][h * hd + k] += std::exp(logit[j] - mx) / z * qkv[j][2 * d + h * hd + k];
    }
  auto mid = x;
  for (int t = 0; t < n; ++t) {
    const auto p = linear(att[t], blk.attn.proj);
    for (int k = 0; k < d; ++k) mid[t][k] += p[k];
  }
  const auto h2 = layer_norm(mid, blk.ln2);
  auto out = mid;
  for (int t = 0; t < n; ++t) {
    auto hidden = linear(h2[t], blk.mlp.fc1);
    for (auto& v : hidden) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    const auto y = linear(hidden, blk.mlp.fc2);
    for (int k = 0; k < d; ++k) out[t][k] += y[k];
    if (adapter) {
      auto a = linear(h2[t], adapter->down);
      for (auto& v : a) v = std::max(v, 0.0);
      const auto u = linear(a, adapter->up);
      for (int k = 0; k < d; ++k) out[t][k] += adapter->scale * u[k];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("window partitions cover every token once") {
  for (int shift : {0, 2}) {
    const auto g = make_window_geometry(8, 4, shift);
    CHECK(g.windows.size() == 4);
    std::multiset<int> seen;
    for (const auto& w : g.windows) seen.insert(w.begin(), w.end());
    CHECK(seen.size() == 64);
    for (int t = 0; t < 64; ++t) CHECK(seen.count(t) == 1);
  }
  CHECK_THROWS(make_window_geometry(8, 3, 0));
  CHECK_THROWS(make_window_geometry(8, 4, 4));
}

TEST_CASE("shifted-window mask blocks exactly the pairs that wrap around the grid") {
  const int grid = 8, w = 4, shift = 2;
  const auto plain = make_window_geometry(grid, w, 0);
  for (const auto& idx : plain.bias_index) CHECK(idx.minCoeff() >= 0);
  const auto g = make_window_geometry(grid, w, shift);
  for (std::size_t k = 0; k < g.windows.size(); ++k) {
    const auto& ids = g.windows[k];
    const int m = static_cast<int>(ids.size());
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        // In-window offsets versus offsets in the original image.
        const int sy = a / w - b / w, sx = a % w - b % w;
        const int oy = ids[a] / grid - ids[b] / grid, ox = ids[a] % grid - ids[b] % grid;
        const bool contiguous = sy == oy && sx == ox;
        CHECK((g.bias_index[k](a, b) >= 0) == contiguous);
        CHECK((g.bias_index[k](a, b) >= 0) == (g.bias_index[k](b, a) >= 0));
      }
  }
}

TEST_CASE("adapt_mlp on hand-set weights matches explicit arithmetic") {
  ParamStore store;
  AdaptMlp mlp;
  mlp.fc1 = {store.add("fc1.w", ParamGroup::backbone, 2, 2), store.add("fc1.b", ParamGroup::backbone, 1, 2)};
  mlp.fc2 = {store.add("fc2.w", ParamGroup::backbone, 2, 2), store.add("fc2.b", ParamGroup::backbone, 1, 2)};
  mlp.fc1.weight->value << 1, -1, 2, 0.5;
  mlp.fc1.bias->value << 0, 0.5;
  mlp.fc2.weight->value << 1, 0, 0, 1;
  mlp.fc2.bias->value << 0, 0;
  Adapter ad;
  ad.down = {store.add("d.w", ParamGroup::adapter, 2, 1), store.add("d.b", ParamGroup::adapter, 1, 1)};
  ad.up = {store.add("u.w", ParamGroup::adapter, 1, 2), store.add("u.b", ParamGroup::adapter, 1, 2)};
  ad.down.weight->value << 2, 3;
  ad.down.bias->value << -1;
  ad.up.weight->value << 0.5, -1;
  ad.up.bias->value << 0.1, 0.2;
  ad.scale = 0.1;
  Mat x(1, 2);
  x << 1, 0;
  // fc1: (1, -0.5); GELU(1) = Phi(1) = 0.8413447460685429, GELU(-0.5) = -0.5 * Phi(-0.5).
  // adapter: relu(2 - 1) = 1; up -> (0.6, -0.8); times 0.1.
  const Mat y = adapt_mlp(x, mlp, &ad);
  CHECK(y(0, 0) == doctest::Approx(0.8413447460685429 + 0.06).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(-0.5 * 0.3085375387259869 - 0.08).epsilon(1e-14));

  const Mat frozen = adapt_mlp(x, mlp, nullptr);
  ad.scale = 0.0;
  CHECK((adapt_mlp(x, mlp, &ad) - frozen).cwiseAbs().maxCoeff() == 0.0);
  ad.scale = 0.1;
  ad.up.weight->value.setZero();
  ad.up.bias->value.setZero();
  CHECK((adapt_mlp(x, mlp, &ad) - frozen).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one block with hand-set weights matches a step-by-step reference") {
  EncoderConfig cfg;
  cfg.input_resize = 8;
  cfg.patch_size = 4;  // 2x2 tokens
  cfg.embed_dim = 4;
  cfg.num_heads = 2;
  cfg.window_size = 2;
  cfg.mlp_ratio = 2;
  ParamStore store;
  Encoder enc(cfg, 3, store, 11);
  AdapterSet ad = enc.make_adapters("center", {}, store, 12);
  // Randomize every parameter, including adapter Up and the norms.
  std::uint64_t s = 100;
  for (const auto& p : store.all()) p->value = random_mat(p->value.rows(), p->value.cols(), ++s, 0.5);
  const Mat x = random_mat(4, 4, 7);
  std::vector<std::vector<double>> xv(4, std::vector<double>(4));
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) xv[i][k] = x(i, k);
  for (const Adapter* a : {static_cast<const Adapter*>(nullptr), static_cast<const Adapter*>(&ad.blocks[0])}) {
    const Mat y = enc.blocks()[0].forward(x, a, nullptr);
    const auto ref = reference_block(xv, enc.blocks()[0], a);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) CHECK(y(i, k) == doctest::Approx(ref[i][k]).epsilon(1e-12));
  }
}

TEST_CASE("fresh adapters leave the backbone output unchanged") {
  EncoderConfig cfg;
  ParamStore store;
  Encoder enc(cfg, 3, store, 1);
  const auto a = enc.make_adapters("center", {}, store, 2);
  const auto b = enc.make_adapters("global", {}, store, 3);
  const auto x = random_patches(cfg, 3, 4);
  const Mat plain = enc.forward(x, nullptr, nullptr);
  CHECK(plain.rows() == 64);
  CHECK((enc.forward(x, &a, nullptr) - plain).cwiseAbs().maxCoeff() == 0.0);
  CHECK((enc.forward(x, &b, nullptr) - plain).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& blk : a.blocks) {
    CHECK(blk.up.weight->value.cwiseAbs().maxCoeff() == 0.0);
    CHECK(blk.down.weight->value.rows() == 16);
    CHECK(blk.down.weight->value.cols() == 4);
  }
}

TEST_CASE("branches with fresh adapters encode identical inputs identically") {
  Model model(ModelConfig{});
  const auto x = random_patches(model.config().encoder, 3, 5);
  const auto c = model.encode_branch(x, Branch::center);
  const auto g = model.encode_branch(x, Branch::global);
  CHECK((c.tokens - g.tokens).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.pooled.size() == 16);
  CHECK((c.pooled - c.tokens.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("stacked identical channels reproduce the 3-channel encoder") {
  EncoderConfig cfg;
  ParamStore s3, s9;
  Encoder e3(cfg, 3, s3, 21);
  Encoder e9(cfg, 9, s9, 21);
  const auto x = random_patches(cfg, 3, 6);
  // The fused input concatenates the three patch vectors of each token.
  PatchMat x9(x.rows(), x.cols() * 3);
  x9 << x, x, x;
  const Mat y3 = e3.forward(x, nullptr, nullptr);
  const Mat y9 = e9.forward(x9, nullptr, nullptr);
  CHECK((y3 - y9).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("backbone parameter count matches the registry") {
  for (int depth : {2, 4})
    for (int window : {2, 4, 8}) {
      EncoderConfig cfg;
      cfg.depth = depth;
      cfg.window_size = window;
      ParamStore store;
      Encoder enc(cfg, 3, store, 1);
      CHECK(backbone_parameter_count(cfg) == store.count());
      CHECK(store.trainable_count() == 0);
    }
  CHECK(backbone_parameter_count(EncoderConfig{}) == 12788);
}

TEST_CASE("adapter parameters: depth * (2 d b + b + d) per branch") {
  EncoderConfig cfg;
  ParamStore store;
  Encoder enc(cfg, 3, store, 1);
  const auto before = store.count();
  enc.make_adapters("x", {}, store, 1);
  const std::int64_t d = 16, b = 4;
  CHECK(store.count() - before == 2 * (2 * d * b + b + d));
}

TEST_CASE("toy CAT model parameter totals") {
  Model m(ModelConfig{});
  CHECK(m.params().count() == 16644);
  CHECK(m.params().trainable_count() == 3856);
  CHECK(m.params().count(ParamGroup::backbone) == 12788);
  for (const Param* p : m.trainable_parameters()) CHECK(p->group != ParamGroup::backbone);
  for (const auto& p : m.params().all())
    if (p->name.rfind("backbone.", 0) == 0) CHECK_FALSE(p->trainable());
}

TEST_CASE("parameter_count agrees with construction for every fusion kind and ablation") {
  for (auto kind : {FusionKind::cat, FusionKind::input_level, FusionKind::feature_level, FusionKind::decision_level,
                    FusionKind::center_only})
    for (bool aft : {false, true}) {
      ModelConfig cfg;
      cfg.fusion = kind;
      cfg.aft = aft;
      Model m(cfg);
      CHECK(parameter_count(cfg) == m.params().count());
    }
  ModelConfig with_acf, without_acf;
  without_acf.acf = false;
  without_acf.mls = false;
  const std::int64_t d = 16, C = 8;
  // Removing ACF drops both attention sets and the surrounding/global heads.
  CHECK(parameter_count(with_acf) - parameter_count(without_acf) ==
        2 * 4 * (d * d + d) + (2 * d * C + C) + (3 * d * C + C) + 2 * 2 * (2 * d * 4 + 4 + d));
}

TEST_CASE("encoder configuration errors") {
  EncoderConfig cfg;
  cfg.depth = 3;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.window_size = 3;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.num_heads = 3;
  CHECK_THROWS(cfg.validate());
  CHECK(EncoderConfig{}.num_tokens() == 64);
}
