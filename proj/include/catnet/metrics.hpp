#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace catnet {

using Confusion = std::vector<std::vector<std::int64_t>>;

/// Correct predictions over total.
double overall_accuracy(std::span<const int> preds, std::span<const int> labels);

/// Unweighted mean of per-class recall over `classes`.
/// A class with no ground-truth sample is an error unless skip_empty, in which
/// case it is left out and a warning recorded.
double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, const std::vector<int>& classes,
                         bool skip_empty = false, std::vector<std::string>* warnings = nullptr);

/// BA restricted to each bucket's classes. Buckets with no classes are absent, as are
/// buckets without ground truth when skip_empty.
std::map<std::string, double> bucketed_ba(std::span<const int> preds, std::span<const int> labels,
                                          const std::map<int, std::string>& bucket_of_class, bool skip_empty = false,
                                          std::vector<std::string>* warnings = nullptr);

/// Entry (i, j) counts ground truth i predicted as j.
Confusion confusion(std::span<const int> preds, std::span<const int> labels, int num_classes);

struct MetricReport {
  double oa = 0.0;
  double ba = 0.0;
  std::optional<double> ba_many, ba_med, ba_few;
  std::map<int, double> per_class_acc;
  Confusion confusion;
  std::int64_t n_total = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  /// Percentages to 2 decimals, one row per class then OA/BA.
  std::string table(const std::vector<std::string>& class_names = {}) const;
  bool operator==(const MetricReport&) const = default;
};

struct ReportOptions {
  /// Class -> "many" / "med" / "few"; empty skips bucketing.
  std::map<int, std::string> buckets;
  /// Leave classes without ground truth out of BA instead of failing.
  bool skip_empty = false;
};

MetricReport make_report(std::span<const int> preds, std::span<const int> labels, int num_classes,
                         const ReportOptions& options = {}, std::vector<std::string>* warnings = nullptr);

}  // namespace catnet
