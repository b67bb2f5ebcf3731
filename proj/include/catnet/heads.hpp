#pragma once

#include "catnet/layers.hpp"
#include "catnet/params.hpp"

#include <optional>
#include <string>

namespace catnet {

/// Affine classifier to C logits, followed by softmax.
struct Head {
  std::string name;
  Linear affine;

  int in_dim() const { return static_cast<int>(affine.weight->value.rows()); }
  int num_classes() const { return static_cast<int>(affine.weight->value.cols()); }
  Vec logits(const Vec& x) const;
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Vec backward(const Vec& x, const Vec& d_logits) const;
};

/// Registers "head.<name>.weight/bias", zero-initialized.
Head make_head(const std::string& name, int in_dim, int num_classes, ParamStore& store);

struct MlsHeads {
  Head center;
  Head surrounding;
  Head global;
};

/// Per-branch distributions and cross-entropy losses. Absent branches stay empty.
struct HeadOutputs {
  std::optional<Vec> logits_c, logits_s, logits_g;
  std::optional<Vec> p_c, p_s, p_g;
  std::optional<double> loss_c, loss_s, loss_g;
  double loss_all = 0.0;
};

HeadOutputs predict_heads(const Vec& center_pooled, const Vec& f_s_fused, const Vec& f_g_fused,
                          const MlsHeads& heads);

/// -log softmax(logits)[label], via log-sum-exp.
double cross_entropy(const Vec& logits, int label);

/// Fills the per-branch losses of the present heads and returns
/// loss_all = loss_c + loss_s + loss_g (absent terms are skipped).
double total_loss(HeadOutputs& outputs, int label);

/// argmax of p_g, lowest index on ties.
int infer(const HeadOutputs& outputs);

}  // namespace catnet
