#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace catnet {

// Compute precision is double throughout; token matrices are (tokens x features).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Stored patch matrices for prepared inputs (tokens x patch_dim).
using PatchMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown for violated preconditions on shapes, labels and configuration.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw Error(message);
}

/// Numerically stable softmax of a vector.
inline Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

/// argmax with ties broken by the lowest index.
inline int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace catnet
