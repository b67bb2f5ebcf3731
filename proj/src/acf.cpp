#include "catnet/acf.hpp"

#include <cmath>
#include <random>

namespace catnet {

namespace {

AttentionSet make_set(const std::string& level, int d, int heads, ParamStore& store, std::mt19937_64& rng) {
  AttentionSet set;
  set.name = level;
  set.num_heads = heads;
  auto linear = [&](const char* which) {
    const std::string prefix = "acf." + level + "." + which;
    Linear l{store.add(prefix + ".weight", ParamGroup::acf, d, d), store.add(prefix + ".bias", ParamGroup::acf, 1, d)};
    fill_normal(l.weight->value, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    return l;
  };
  set.q = linear("q");
  set.k = linear("k");
  set.v = linear("v");
  set.o = linear("o");
  return set;
}

Mat as_row(const Vec& v) { return v.transpose(); }

Mat select_queries(const BranchFeatures& center, const AcfOptions& options) {
  return options.query == AcfQuery::pooled ? as_row(center.pooled) : center.tokens;
}

Mat global_kv(const BranchFeatures& surrounding, const BranchFeatures& global, const AcfOptions& options) {
  if (!options.global_kv_with_surrounding) return global.tokens;
  Mat kv(surrounding.tokens.rows() + global.tokens.rows(), global.tokens.cols());
  kv << surrounding.tokens, global.tokens;
  return kv;
}

}  // namespace

AcfParams make_acf_params(int embed_dim, int num_heads, ParamStore& store, std::uint64_t seed) {
  require(num_heads > 0 && embed_dim % num_heads == 0, "ACF heads must divide embed_dim");
  std::mt19937_64 rng(seed);
  AcfParams p;
  p.surrounding = make_set("surrounding", embed_dim, num_heads, store, rng);
  p.global = make_set("global", embed_dim, num_heads, store, rng);
  return p;
}

Mat cross_attend(const Mat& queries, const Mat& kv_tokens, const AttentionSet& set, CrossAttentionCache* cache) {
  require(kv_tokens.rows() > 0, "cross_attend: empty key/value sequence");
  const auto d = set.q.weight->value.rows();
  require(queries.cols() == d && kv_tokens.cols() == d, "cross_attend: feature width mismatch");
  CrossAttentionCache local;
  CrossAttentionCache& c = cache ? *cache : local;
  c.queries = queries;
  c.kv = kv_tokens;
  c.q = set.q.forward(queries);
  c.k = set.k.forward(kv_tokens);
  c.v = set.v.forward(kv_tokens);
  const int hd = static_cast<int>(d) / set.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  c.concat.resize(queries.rows(), d);
  c.weights.assign(set.num_heads, Mat());
  for (int h = 0; h < set.num_heads; ++h) {
    Mat logits = c.q.middleCols(h * hd, hd) * c.k.middleCols(h * hd, hd).transpose() * scale;
    Mat a(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double mx = logits.row(i).maxCoeff();
      a.row(i) = (logits.row(i).array() - mx).exp();
      a.row(i) /= a.row(i).sum();
    }
    c.concat.middleCols(h * hd, hd) = a * c.v.middleCols(h * hd, hd);
    c.weights[h] = std::move(a);
  }
  return set.o.forward(c.concat);
}

Vec cross_attend(const Vec& query, const Mat& kv_tokens, const AttentionSet& set) {
  return cross_attend(as_row(query), kv_tokens, set, nullptr).row(0).transpose();
}

void cross_attend_backward(const CrossAttentionCache& c, const AttentionSet& set, const Mat& d_out, Mat* d_queries,
                           Mat* d_kv) {
  const auto d = c.q.cols();
  const int hd = static_cast<int>(d) / set.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Mat d_concat = set.o.backward(c.concat, d_out);
  Mat d_q(c.q.rows(), d), d_k(c.k.rows(), d), d_v(c.v.rows(), d);
  for (int h = 0; h < set.num_heads; ++h) {
    const Mat& a = c.weights[h];
    const auto d_o = d_concat.middleCols(h * hd, hd);
    const Mat d_a = d_o * c.v.middleCols(h * hd, hd).transpose();
    d_v.middleCols(h * hd, hd) = a.transpose() * d_o;
    const Mat d_logits = a.array() * (d_a.colwise() - (a.array() * d_a.array()).rowwise().sum().matrix()).array();
    d_q.middleCols(h * hd, hd) = d_logits * c.k.middleCols(h * hd, hd) * scale;
    d_k.middleCols(h * hd, hd) = d_logits.transpose() * c.q.middleCols(h * hd, hd) * scale;
  }
  Mat dq_in = set.q.backward(c.queries, d_q);
  Mat dkv_in = set.k.backward(c.kv, d_k) + set.v.backward(c.kv, d_v);
  if (d_queries) *d_queries = std::move(dq_in);
  if (d_kv) *d_kv = std::move(dkv_in);
}

FusedFeatures fuse(const BranchFeatures& center, const BranchFeatures& surrounding, const BranchFeatures& global,
                   const AcfParams& params, const AcfOptions& options, AcfCache* cache) {
  const auto d = center.pooled.size();
  require(surrounding.tokens.cols() == d && global.tokens.cols() == d, "fuse: feature width mismatch");
  AcfCache local;
  AcfCache& c = cache ? *cache : local;
  const Mat queries = select_queries(center, options);
  FusedFeatures f;
  f.f_s_acf = mean_pool(cross_attend(queries, surrounding.tokens, params.surrounding, &c.surrounding));
  f.f_g_acf = mean_pool(cross_attend(queries, global_kv(surrounding, global, options), params.global, &c.global));
  f.f_s_fused.resize(2 * d);
  f.f_s_fused << center.pooled, f.f_s_acf;
  f.f_g_fused.resize(3 * d);
  f.f_g_fused << center.pooled, f.f_s_acf, f.f_g_acf;
  return f;
}

std::pair<Vec, Vec> fuse_surrounding(const BranchFeatures& center, const BranchFeatures& surrounding,
                                     const AcfParams& params, const AcfOptions& options) {
  const auto d = center.pooled.size();
  require(surrounding.tokens.cols() == d, "fuse_surrounding: feature width mismatch");
  Vec acf = mean_pool(cross_attend(select_queries(center, options), surrounding.tokens, params.surrounding, nullptr));
  Vec fused(2 * d);
  fused << center.pooled, acf;
  return {acf, fused};
}

std::pair<Vec, Vec> fuse_global(const BranchFeatures& center, const BranchFeatures& surrounding,
                                const BranchFeatures& global, const AcfParams& params, const AcfOptions& options) {
  FusedFeatures f = fuse(center, surrounding, global, params, options, nullptr);
  return {f.f_g_acf, f.f_g_fused};
}

FusedGradients fuse_backward(const AcfCache& cache, const AcfParams& params, const AcfOptions& options, int d,
                             int num_surrounding_tokens, const Vec& d_f_s_fused, const Vec& d_f_g_fused) {
  FusedGradients g;
  g.d_center_pooled = d_f_s_fused.head(d) + d_f_g_fused.head(d);
  const Vec d_s_acf = d_f_s_fused.segment(d, d) + d_f_g_fused.segment(d, d);
  const Vec d_g_acf = d_f_g_fused.segment(2 * d, d);

  // Mean pooling over query rows spreads the gradient evenly.
  const auto nq = cache.surrounding.queries.rows();
  const Mat d_s_out = Mat::Constant(nq, 1, 1.0 / static_cast<double>(nq)) * d_s_acf.transpose();
  const Mat d_g_out = Mat::Constant(nq, 1, 1.0 / static_cast<double>(nq)) * d_g_acf.transpose();

  Mat dq_s, dq_g, d_kv_s, d_kv_g;
  cross_attend_backward(cache.surrounding, params.surrounding, d_s_out, &dq_s, &d_kv_s);
  cross_attend_backward(cache.global, params.global, d_g_out, &dq_g, &d_kv_g);

  const Mat dq = dq_s + dq_g;
  if (options.query == AcfQuery::pooled) {
    g.d_center_pooled += dq.row(0).transpose();
  } else {
    g.d_center_tokens = dq;
  }
  g.d_surrounding_tokens = d_kv_s;
  if (options.global_kv_with_surrounding) {
    g.d_surrounding_tokens += d_kv_g.topRows(num_surrounding_tokens);
    g.d_global_tokens = d_kv_g.bottomRows(d_kv_g.rows() - num_surrounding_tokens);
  } else {
    g.d_global_tokens = d_kv_g;
  }
  return g;
}

}  // namespace catnet
