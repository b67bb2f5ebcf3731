#pragma once

#include "catnet/encoder.hpp"
#include "catnet/layers.hpp"
#include "catnet/params.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace catnet {

/// One multi-head attention parameter set (query/key/value/output projections).
struct AttentionSet {
  std::string name;
  Linear q;
  Linear k;
  Linear v;
  Linear o;
  int num_heads = 1;
};

/// Surrounding-level and global-level attention sets; they share nothing.
struct AcfParams {
  AttentionSet surrounding;
  AttentionSet global;
};

AcfParams make_acf_params(int embed_dim, int num_heads, ParamStore& store, std::uint64_t seed);

enum class AcfQuery {
  pooled,  ///< one query: the mean-pooled center feature
  tokens,  ///< every center token queries; outputs are mean-pooled
};

struct AcfOptions {
  AcfQuery query = AcfQuery::pooled;
  /// Global-level keys/values drawn from surrounding and global tokens together.
  bool global_kv_with_surrounding = false;
};

struct CrossAttentionCache {
  Mat queries;
  Mat kv;
  Mat q;
  Mat k;
  Mat v;
  /// Per head: (num queries x num kv) softmax weights.
  std::vector<Mat> weights;
  Mat concat;
};

/// Multi-head attention of `queries` (rows) over `kv_tokens` (rows).
Mat cross_attend(const Mat& queries, const Mat& kv_tokens, const AttentionSet& set, CrossAttentionCache* cache);
Vec cross_attend(const Vec& query, const Mat& kv_tokens, const AttentionSet& set);

/// Accumulates parameter gradients; writes gradients of queries and kv tokens.
void cross_attend_backward(const CrossAttentionCache& cache, const AttentionSet& set, const Mat& d_out,
                           Mat* d_queries, Mat* d_kv);

struct FusedFeatures {
  Vec f_s_acf;
  Vec f_g_acf;
  Vec f_s_fused;  ///< concat(center pooled, f_s_acf), length 2d
  Vec f_g_fused;  ///< concat(center pooled, f_s_acf, f_g_acf), length 3d
};

struct AcfCache {
  CrossAttentionCache surrounding;
  CrossAttentionCache global;
};

/// Returns (f_s_acf, f_s_fused).
std::pair<Vec, Vec> fuse_surrounding(const BranchFeatures& center, const BranchFeatures& surrounding,
                                     const AcfParams& params, const AcfOptions& options = {});
/// Returns (f_g_acf, f_g_fused).
std::pair<Vec, Vec> fuse_global(const BranchFeatures& center, const BranchFeatures& surrounding,
                                const BranchFeatures& global, const AcfParams& params, const AcfOptions& options = {});

/// Both levels in one pass.
FusedFeatures fuse(const BranchFeatures& center, const BranchFeatures& surrounding, const BranchFeatures& global,
                   const AcfParams& params, const AcfOptions& options, AcfCache* cache);

struct FusedGradients {
  Vec d_center_pooled;
  Mat d_center_tokens;  ///< nonempty only for token queries
  Mat d_surrounding_tokens;
  Mat d_global_tokens;
};

FusedGradients fuse_backward(const AcfCache& cache, const AcfParams& params, const AcfOptions& options, int embed_dim,
                             int num_surrounding_tokens, const Vec& d_f_s_fused, const Vec& d_f_g_fused);

}  // namespace catnet
