#include "catnet/metrics.hpp"

#include "catnet/tensor.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace catnet {

using nlohmann::json;

namespace {

void check_inputs(std::span<const int> preds, std::span<const int> labels) {
  require(!labels.empty(), "metrics need at least one sample");
  require(preds.size() == labels.size(), "prediction and label counts differ");
}

}  // namespace

double overall_accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_inputs(preds, labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, const std::vector<int>& classes,
                         bool skip_empty, std::vector<std::string>* warnings) {
  check_inputs(preds, labels);
  require(!classes.empty(), "balanced accuracy needs a nonempty class set");
  std::map<int, std::pair<std::int64_t, std::int64_t>> tally;  // class -> (correct, support)
  for (int c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    it->second.first += preds[i] == labels[i];
  }
  double sum = 0.0;
  int used = 0;
  for (const auto& [c, t] : tally) {
    if (t.second == 0) {
      require(skip_empty, "class " + std::to_string(c) + " has no ground-truth samples; balanced accuracy undefined");
      if (warnings) warnings->push_back("class " + std::to_string(c) + " has no samples; left out of BA");
      continue;
    }
    sum += static_cast<double>(t.first) / static_cast<double>(t.second);
    ++used;
  }
  require(used > 0, "no class in the set has ground-truth samples");
  return sum / used;
}

std::map<std::string, double> bucketed_ba(std::span<const int> preds, std::span<const int> labels,
                                          const std::map<int, std::string>& bucket_of_class, bool skip_empty,
                                          std::vector<std::string>* warnings) {
  std::map<std::string, std::vector<int>> members;
  for (const auto& [c, name] : bucket_of_class) members[name].push_back(c);
  std::map<std::string, double> out;
  for (const auto& [name, classes] : members) {
    const bool any = std::any_of(labels.begin(), labels.end(), [&](int y) {
      return std::find(classes.begin(), classes.end(), y) != classes.end();
    });
    if (!any && skip_empty) {
      if (warnings) warnings->push_back("bucket " + name + " has no samples; left out");
      continue;
    }
    out[name] = balanced_accuracy(preds, labels, classes, skip_empty, warnings);
  }
  return out;
}

Confusion confusion(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  require(preds.size() == labels.size(), "prediction and label counts differ");
  require(num_classes > 0, "confusion needs at least one class");
  Confusion m(num_classes, std::vector<std::int64_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, "label " + std::to_string(labels[i]) + " out of range");
    require(preds[i] >= 0 && preds[i] < num_classes, "prediction " + std::to_string(preds[i]) + " out of range");
    ++m[labels[i]][preds[i]];
  }
  return m;
}

MetricReport make_report(std::span<const int> preds, std::span<const int> labels, int num_classes,
                         const ReportOptions& options, std::vector<std::string>* warnings) {
  MetricReport r;
  r.oa = overall_accuracy(preds, labels);
  r.confusion = confusion(preds, labels, num_classes);
  r.n_total = static_cast<std::int64_t>(labels.size());
  std::vector<int> classes(num_classes);
  for (int c = 0; c < num_classes; ++c) classes[c] = c;
  r.ba = balanced_accuracy(preds, labels, classes, options.skip_empty, warnings);
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t support = 0;
    for (auto v : r.confusion[c]) support += v;
    if (support > 0) r.per_class_acc[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(support);
  }
  if (!options.buckets.empty()) {
    const auto b = bucketed_ba(preds, labels, options.buckets, options.skip_empty, warnings);
    if (auto it = b.find("many"); it != b.end()) r.ba_many = it->second;
    if (auto it = b.find("med"); it != b.end()) r.ba_med = it->second;
    if (auto it = b.find("few"); it != b.end()) r.ba_few = it->second;
  }
  return r;
}

json MetricReport::to_json() const {
  json j{{"oa", oa}, {"ba", ba}, {"n_total", n_total}, {"confusion", confusion}};
  if (ba_many) j["ba_many"] = *ba_many;
  if (ba_med) j["ba_med"] = *ba_med;
  if (ba_few) j["ba_few"] = *ba_few;
  json pc = json::object();
  for (const auto& [c, a] : per_class_acc) pc[std::to_string(c)] = a;
  j["per_class_acc"] = pc;
  return j;
}

MetricReport MetricReport::from_json(const json& j) {
  MetricReport r;
  r.oa = j.at("oa");
  r.ba = j.at("ba");
  r.n_total = j.at("n_total");
  r.confusion = j.at("confusion").get<Confusion>();
  if (j.contains("ba_many")) r.ba_many = j["ba_many"].get<double>();
  if (j.contains("ba_med")) r.ba_med = j["ba_med"].get<double>();
  if (j.contains("ba_few")) r.ba_few = j["ba_few"].get<double>();
  for (const auto& [k, v] : j.at("per_class_acc").items()) r.per_class_acc[std::stoi(k)] = v.get<double>();
  return r;
}

std::string MetricReport::table(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  char buf[128];
  for (const auto& [c, a] : per_class_acc) {
    const std::string name = c < static_cast<int>(class_names.size()) ? class_names[c] : "class_" + std::to_string(c);
    std::snprintf(buf, sizeof buf, "%-24s %7.2f\n", name.c_str(), 100.0 * a);
    os << buf;
  }
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%-24s %7.2f\n", name, 100.0 * v);
    os << buf;
  };
  row("OA", oa);
  row("BA", ba);
  if (ba_many) row("BA_many", *ba_many);
  if (ba_med) row("BA_med", *ba_med);
  if (ba_few) row("BA_few", *ba_few);
  os << "samples " << n_total << '\n';
  return os.str();
}

}  // namespace catnet
