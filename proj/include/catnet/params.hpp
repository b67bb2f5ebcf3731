#pragma once

#include "catnet/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace catnet {

/// Which part of the model a parameter belongs to. Only the backbone is frozen.
enum class ParamGroup { backbone, adapter, acf, head };

std::string_view to_string(ParamGroup group);

struct Param {
  std::string name;
  ParamGroup group = ParamGroup::backbone;
  Mat value;
  Mat grad;

  bool trainable() const { return group != ParamGroup::backbone; }
  Eigen::Index size() const { return value.size(); }
};

/// Named parameter registry. Parameter addresses are stable for the lifetime
/// of the registry, so layers may hold raw pointers into it.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param* add(std::string name, ParamGroup group, Eigen::Index rows, Eigen::Index cols);

  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  /// Registration order.
  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }

  std::vector<Param*> trainable();
  std::vector<const Param*> trainable() const;

  Eigen::Index count() const;
  Eigen::Index count(ParamGroup group) const;
  Eigen::Index trainable_count() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, Param*, std::less<>> index_;
};

/// splitmix64 mix of a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Rounds every value to the nearest float32 so checkpoints are lossless.
void quantize_to_float(Mat& m);

/// Fills with N(0, std^2) draws, rounded to float32.
void fill_normal(Mat& m, double std, std::mt19937_64& rng);

}  // namespace catnet
