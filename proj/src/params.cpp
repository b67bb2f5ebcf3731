#include "catnet/params.hpp"

namespace catnet {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::adapter: return "adapter";
    case ParamGroup::acf: return "acf";
    case ParamGroup::head: return "head";
  }
  return "unknown";
}

Param* ParamStore::add(std::string name, ParamGroup group, Eigen::Index rows, Eigen::Index cols) {
  require(!index_.contains(name), "duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->group = group;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  Param* raw = p.get();
  index_.emplace(raw->name, raw);
  params_.push_back(std::move(p));
  return raw;
}

Param* ParamStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

Param& ParamStore::at(std::string_view name) {
  Param* p = find(name);
  require(p != nullptr, "unknown parameter: " + std::string(name));
  return *p;
}

const Param& ParamStore::at(std::string_view name) const {
  const Param* p = find(name);
  require(p != nullptr, "unknown parameter: " + std::string(name));
  return *p;
}

std::vector<Param*> ParamStore::trainable() {
  std::vector<Param*> out;
  for (auto& p : params_)
    if (p->trainable()) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::trainable() const {
  std::vector<const Param*> out;
  for (const auto& p : params_)
    if (p->trainable()) out.push_back(p.get());
  return out;
}

Eigen::Index ParamStore::count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

Eigen::Index ParamStore::count(ParamGroup group) const {
  Eigen::Index n = 0;
  for (const auto& p : params_)
    if (p->group == group) n += p->size();
  return n;
}

Eigen::Index ParamStore::trainable_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_)
    if (p->trainable()) n += p->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void quantize_to_float(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

void fill_normal(Mat& m, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  quantize_to_float(m);
}

}  // namespace catnet
