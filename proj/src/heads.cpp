#include "catnet/heads.hpp"

#include <cmath>

namespace catnet {

Vec Head::logits(const Vec& x) const {
  require(x.size() == in_dim(), "head " + name + ": input width " + std::to_string(x.size()) + " != " +
                                    std::to_string(in_dim()));
  return (affine.weight->value.transpose() * x) + affine.bias->value.row(0).transpose();
}

Vec Head::backward(const Vec& x, const Vec& d_logits) const {
  affine.weight->grad.noalias() += x * d_logits.transpose();
  affine.bias->grad.row(0) += d_logits.transpose();
  return affine.weight->value * d_logits;
}

Head make_head(const std::string& name, int in_dim, int num_classes, ParamStore& store) {
  require(num_classes >= 1, "head needs at least one class");
  return Head{name, Linear{store.add("head." + name + ".weight", ParamGroup::head, in_dim, num_classes),
                           store.add("head." + name + ".bias", ParamGroup::head, 1, num_classes)}};
}

HeadOutputs predict_heads(const Vec& center_pooled, const Vec& f_s_fused, const Vec& f_g_fused,
                          const MlsHeads& heads) {
  HeadOutputs out;
  out.logits_c = heads.center.logits(center_pooled);
  out.logits_s = heads.surrounding.logits(f_s_fused);
  out.logits_g = heads.global.logits(f_g_fused);
  out.p_c = softmax(*out.logits_c);
  out.p_s = softmax(*out.logits_s);
  out.p_g = softmax(*out.logits_g);
  return out;
}

double cross_entropy(const Vec& logits, int label) {
  require(label >= 0 && label < logits.size(), "label " + std::to_string(label) + " out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[label];
}

namespace {

std::optional<double> branch_loss(const std::optional<Vec>& logits, const std::optional<Vec>& p, int label) {
  if (logits) return cross_entropy(*logits, label);
  if (p) {
    require(label >= 0 && label < p->size(), "label " + std::to_string(label) + " out of range");
    return -std::log((*p)[label]);
  }
  return std::nullopt;
}

}  // namespace

double total_loss(HeadOutputs& o, int label) {
  o.loss_c = branch_loss(o.logits_c, o.p_c, label);
  o.loss_s = branch_loss(o.logits_s, o.p_s, label);
  o.loss_g = branch_loss(o.logits_g, o.p_g, label);
  double sum = 0.0;
  if (o.loss_c) sum += *o.loss_c;
  if (o.loss_s) sum += *o.loss_s;
  if (o.loss_g) sum += *o.loss_g;
  o.loss_all = sum;
  return sum;
}

int infer(const HeadOutputs& outputs) {
  require(outputs.p_g.has_value(), "infer: outputs carry no global-head distribution");
  return argmax(*outputs.p_g);
}

}  // namespace catnet
