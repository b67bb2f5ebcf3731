#include "catnet/data_model.hpp"
#include "catnet/metrics.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace catnet;

namespace {

std::vector<int> all_classes(int n) {
  std::vector<int> c(n);
  for (int i = 0; i < n; ++i) c[i] = i;
  return c;
}

}  // namespace

TEST_CASE("overall accuracy examples") {
  const std::vector<int> y{0, 1, 2, 3};
  CHECK(overall_accuracy(y, y) == 1.0);
  CHECK(overall_accuracy(std::vector<int>{0, 1, 2, 0}, y) == 0.75);
  CHECK_THROWS(overall_accuracy(std::vector<int>{}, std::vector<int>{}));
  CHECK_THROWS(overall_accuracy(std::vector<int>{1}, y));
}

TEST_CASE("balanced accuracy examples") {
  // Recall 1.0 for class 0, 0.5 for class 1.
  const std::vector<int> y{0, 0, 1, 1}, p{0, 0, 1, 0};
  CHECK(balanced_accuracy(p, y, {0, 1}) == 0.75);
  CHECK(balanced_accuracy(y, y, {0, 1}) == 1.0);
}

TEST_CASE("skewed 90/9/1 fixture: BA from a per-class tally differs from OA") {
  std::vector<int> y, p;
  for (int i = 0; i < 90; ++i) y.push_back(0), p.push_back(0);
  for (int i = 0; i < 9; ++i) y.push_back(1), p.push_back(i < 3 ? 1 : 0);
  y.push_back(2), p.push_back(0);
  const double ba = balanced_accuracy(p, y, {0, 1, 2});
  CHECK(ba == doctest::Approx((1.0 + 3.0 / 9.0 + 0.0) / 3.0));
  CHECK(overall_accuracy(p, y) == doctest::Approx(0.93));
  CHECK(ba != doctest::Approx(overall_accuracy(p, y)));
}

TEST_CASE("empty ground-truth classes fail unless skipped with a warning") {
  const std::vector<int> y{0, 0, 1}, p{0, 1, 1};
  CHECK_THROWS_AS(balanced_accuracy(p, y, {0, 1, 2}), Error);
  std::vector<std::string> warnings;
  CHECK(balanced_accuracy(p, y, {0, 1, 2}, true, &warnings) == doctest::Approx(0.75));
  CHECK(warnings.size() == 1);
}

TEST_CASE("random fixtures match the brute-force oracles exactly") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 300; ++t) {
    const auto f = oracle::random_fixture(rng);
    const auto classes = all_classes(f.num_classes);
    CHECK(overall_accuracy(f.preds, f.labels) == oracle::overall_accuracy(f.preds, f.labels));
    CHECK(balanced_accuracy(f.preds, f.labels, classes, true) == oracle::balanced_accuracy(f.preds, f.labels, classes));
    CHECK(confusion(f.preds, f.labels, f.num_classes) == oracle::confusion(f.preds, f.labels, f.num_classes));
    const auto buckets = bucket_categories(f.train_counts, BucketSpec{});
    for (const auto& [c, name] : buckets) CHECK(name == oracle::bucket_of_count(f.train_counts.at(c)));
    std::map<std::string, std::vector<int>> members;
    for (const auto& [c, name] : buckets) members[name].push_back(c);
    const auto got = bucketed_ba(f.preds, f.labels, buckets, true);
    for (const auto& [name, cls] : members) {
      const double ref = oracle::balanced_accuracy(f.preds, f.labels, cls);
      if (ref < 0) {
        CHECK(got.count(name) == 0);  // bucket without any test sample
      } else {
        CHECK(got.at(name) == ref);
      }
    }
  }
}

TEST_CASE("OA equals BA on class-balanced data") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> y, p;
  for (int c = 0; c < 5; ++c)
    for (int k = 0; k < 40; ++k) y.push_back(c), p.push_back(cls(rng));
  CHECK(overall_accuracy(p, y) == doctest::Approx(balanced_accuracy(p, y, all_classes(5))).epsilon(1e-15));
}

TEST_CASE("metrics are invariant to sample order") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto f = oracle::random_fixture(rng);
    const auto before = make_report(f.preds, f.labels, f.num_classes, {.skip_empty = true});
    std::vector<std::size_t> order(f.labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> y, p;
    for (auto i : order) y.push_back(f.labels[i]), p.push_back(f.preds[i]);
    const auto after = make_report(p, y, f.num_classes, {.skip_empty = true});
    CHECK(before.confusion == after.confusion);
    CHECK(before.ba == doctest::Approx(after.ba).epsilon(1e-15));
    CHECK(before.oa == after.oa);
  }
}

TEST_CASE("BA is the mean over classes, not the mean of the bucket BAs") {
  // Classes 0..3 many, 4 med, 5 few; recalls 1, 1, 1, 1, 0.5, 0.
  std::vector<int> y, p;
  for (int c = 0; c < 6; ++c)
    for (int k = 0; k < 4; ++k) {
      y.push_back(c);
      const bool right = c < 4 || (c == 4 && k < 2);
      p.push_back(right ? c : (c + 1) % 6);
    }
  ReportOptions opt;
  opt.buckets = {{0, "many"}, {1, "many"}, {2, "many"}, {3, "many"}, {4, "med"}, {5, "few"}};
  const auto r = make_report(p, y, 6, opt);
  CHECK(*r.ba_many == 1.0);
  CHECK(*r.ba_med == 0.5);
  CHECK(*r.ba_few == 0.0);
  CHECK(r.ba == doctest::Approx((4 * 1.0 + 0.5 + 0.0) / 6.0));
  CHECK(r.ba == doctest::Approx((4 * *r.ba_many + 1 * *r.ba_med + 1 * *r.ba_few) / 6.0));
  CHECK(r.ba != doctest::Approx((*r.ba_many + *r.ba_med + *r.ba_few) / 3.0));
  // A reported overall BA lies within the range of its bucket BAs (reference row: 94.89 / 73.95 / 71.24 -> 75.78).
  CHECK(75.78 >= 71.24);
  CHECK(75.78 <= 94.89);
}

TEST_CASE("all classes in one bucket: that bucket equals global BA and others are absent") {
  const std::vector<int> y{0, 1, 2, 2}, p{0, 2, 2, 1};
  ReportOptions opt;
  opt.buckets = {{0, "few"}, {1, "few"}, {2, "few"}};
  const auto r = make_report(p, y, 3, opt);
  CHECK(*r.ba_few == r.ba);
  CHECK_FALSE(r.ba_many.has_value());
  CHECK_FALSE(r.ba_med.has_value());
}

TEST_CASE("report JSON round trip and table") {
  const std::vector<int> y{0, 1, 1, 2}, p{0, 1, 0, 2};
  ReportOptions opt;
  opt.buckets = {{0, "many"}, {1, "med"}, {2, "few"}};
  const auto r = make_report(p, y, 3, opt);
  CHECK(MetricReport::from_json(r.to_json()) == r);
  CHECK(r.per_class_acc.at(1) == 0.5);
  const auto table = r.table({"river", "lake", "pond"});
  CHECK(table.find("lake") != std::string::npos);
  CHECK(table.find("50.00") != std::string::npos);
  CHECK(table.find("OA") != std::string::npos);
}

TEST_CASE("confusion rejects out-of-range ids") {
  CHECK_THROWS(confusion(std::vector<int>{0, 3}, std::vector<int>{0, 1}, 3));
  CHECK_THROWS(confusion(std::vector<int>{0, 1}, std::vector<int>{-1, 1}, 3));
  const auto m = confusion(std::vector<int>{1, 1, 0}, std::vector<int>{0, 1, 0}, 2);
  CHECK(m[0][1] == 1);
  CHECK(m[1][1] == 1);
  CHECK(m[0][0] == 1);
}
