#include "catnet/image.hpp"
#include "catnet/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

using namespace catnet;

namespace {

double pixel(const RgbImage& img, std::size_t i) { return img.pixels[i] / 255.0; }

// Nearest class centroid on area-resized pixels: first half fits, second half scores.
double nearest_centroid_accuracy(const std::vector<SceneSample>& samples, int num_classes, bool center_only, int res) {
  auto feat = [&](const SceneSample& s) { return resize_area(center_only ? s.center : s.global, res, res); };
  const std::size_t half = samples.size() / 2;
  std::vector<std::vector<double>> centroid(num_classes);
  std::vector<int> count(num_classes, 0);
  for (std::size_t i = 0; i < half; ++i) {
    const auto f = feat(samples[i]);
    auto& c = centroid[samples[i].label];
    if (c.empty()) c.assign(f.size(), 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) c[k] += f[k];
    ++count[samples[i].label];
  }
  for (int c = 0; c < num_classes; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  int correct = 0;
  for (std::size_t i = half; i < samples.size(); ++i) {
    const auto f = feat(samples[i]);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < num_classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - centroid[c][k]) * (f[k] - centroid[c][k]);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == samples[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size() - half);
}

}  // namespace

TEST_CASE("center-only Bayes accuracy examples") {
  auto two = paired_spec(2, 1);
  CHECK(bayes_center_accuracy(two) == doctest::Approx(0.5));
  GeneratorSpec singles;
  singles.num_classes = 4;
  CHECK(bayes_center_accuracy(singles) == doctest::Approx(1.0));
  CHECK(bayes_center_accuracy(paired_spec(8, 4)) == doctest::Approx(0.5));

  // Zipf p = (1, 1/2, 1/3) / (11/6) in a single group: max is 6/11.
  GeneratorSpec zipf;
  zipf.num_classes = 3;
  zipf.ambiguity_groups = {{0, 1, 2}};
  zipf.class_prior = {PriorKind::zipf, 1.0};
  CHECK(bayes_center_accuracy(zipf) == doctest::Approx(6.0 / 11.0));
  // Exponent 0 is uniform; groups {0,1}, {2}: 1/3 + 1/3.
  GeneratorSpec flat;
  flat.num_classes = 3;
  flat.ambiguity_groups = {{0, 1}};
  flat.class_prior = {PriorKind::zipf, 0.0};
  CHECK(bayes_center_accuracy(flat) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rendering is bit-exact for a fixed seed and sizes are concentric") {
  auto spec = paired_spec(4, 2);
  spec.clutter = 5;
  const auto a = render_sample(1, spec, 77);
  const auto b = render_sample(1, spec, 77);
  CHECK(a.center == b.center);
  CHECK(a.global == b.global);
  CHECK(a.center.width == 32);
  CHECK(a.surrounding.width == 96);
  CHECK(a.global.width == 160);
  CHECK_FALSE(render_sample(1, spec, 78).global == a.global);
}

TEST_CASE("the center and surrounding are concentric crops of the global raster") {
  auto spec = paired_spec(4, 2);
  spec.clutter = 8;
  const auto s = render_sample(3, spec, 5);
  CHECK(crop_replicate(s.global, 64, 64, 32, 32) == s.center);
  CHECK(crop_replicate(s.global, 32, 32, 96, 96) == s.surrounding);
  CHECK(crop_replicate(s.surrounding, 32, 32, 32, 32) == s.center);
}

TEST_CASE("classes of one group share the center, not the context") {
  auto spec = paired_spec(4, 2);
  spec.clutter = 4;
  const auto a = render_sample(0, spec, 1234);
  const auto b = render_sample(1, spec, 1234);
  const auto c = render_sample(2, spec, 1234);
  CHECK(a.center == b.center);
  CHECK_FALSE(a.surrounding == b.surrounding);
  CHECK_FALSE(a.center == c.center);
}

TEST_CASE("provenance: center motif is the group, context motif the class") {
  auto spec = paired_spec(6, 2);
  spec.samples_per_class = 3;
  std::vector<ProvenanceRecord> prov;
  const auto samples = generate_samples(spec, &prov);
  REQUIRE(prov.size() == samples.size());
  const auto group_of = spec.group_of_class();
  for (std::size_t i = 0; i < prov.size(); ++i) {
    CHECK(prov[i].sample_id == samples[i].id);
    CHECK(prov[i].cls == samples[i].label);
    CHECK(prov[i].center_motif == group_of[prov[i].cls]);
    CHECK(prov[i].context_motif == prov[i].cls);
  }
  for (const auto& p : prov)
    for (const auto& q : prov)
      if (spec.group_of_class()[p.cls] == spec.group_of_class()[q.cls]) CHECK(p.center_motif == q.center_motif);
}

TEST_CASE("pixel noise has the configured standard deviation") {
  GeneratorSpec clean = paired_spec(2, 1);
  clean.motif_noise = 0.0;
  clean.clutter = 6;
  GeneratorSpec noisy = clean;
  noisy.motif_noise = 0.1;
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto a = render_sample(0, clean, seed).global;
    const auto b = render_sample(0, noisy, seed).global;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      const double v = pixel(a, i);
      if (v < 0.25 || v > 0.75) continue;  // keep away from clamping
      const double d = pixel(b, i) - v;
      sum += d;
      sum2 += d * d;
      ++n;
    }
  }
  REQUIRE(n > 10000);
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(sd - 0.1) <= 0.005);
  CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("noiseless context separates classes that the center cannot") {
  auto spec = paired_spec(4, 2);
  spec.motif_noise = 0.0;
  spec.clutter = 0;
  spec.samples_per_class = 120;
  spec.seed = 3;
  const auto samples = generate_samples(spec);
  const double full = nearest_centroid_accuracy(samples, 4, false, 20);
  const double center = nearest_centroid_accuracy(samples, 4, true, 8);
  MESSAGE("full " << full << " center " << center);
  CHECK(full >= 0.95);
  CHECK(center <= bayes_center_accuracy(spec) + 0.1);
}

TEST_CASE("uniform labels are exact and zipf labels follow the prior") {
  GeneratorSpec u;
  u.num_classes = 5;
  u.samples_per_class = 7;
  std::map<int, int> counts;
  for (int l : sample_labels(u)) ++counts[l];
  for (int c = 0; c < 5; ++c) CHECK(counts[c] == 7);

  GeneratorSpec z;
  z.num_classes = 8;
  z.class_prior = {PriorKind::zipf, 1.0};
  z.samples_per_class = 1250;  // 10000 draws
  const auto labels = sample_labels(z);
  const auto p = z.class_prior.probabilities(8);
  std::vector<int> n(8, 0);
  for (int l : labels) ++n[l];
  double chi2 = 0.0;
  for (int c = 0; c < 8; ++c) {
    const double e = p[c] * labels.size();
    chi2 += (n[c] - e) * (n[c] - e) / e;
  }
  // chi-square critical value, 7 degrees of freedom, p = 0.01
  CHECK(chi2 < 18.475);
  CHECK(sample_labels(z) == labels);
}

TEST_CASE("invalid generator specs are rejected") {
  GeneratorSpec s;
  s.ambiguity_groups = {{0, 1}, {1, 2}};
  CHECK_THROWS_AS(s.validate(), Error);
  s.ambiguity_groups = {{0, 9}};
  CHECK_THROWS_AS(s.validate(), Error);
  s.ambiguity_groups = {{}};
  CHECK_THROWS_AS(s.validate(), Error);
  GeneratorSpec p;
  p.class_prior = {PriorKind::zipf, -1.0};
  try {
    p.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unsatisfiable prior") != std::string::npos);
  }
  GeneratorSpec sizes;
  sizes.image_sizes = {32, 64, 160};
  CHECK_THROWS(sizes.validate());
  CHECK_THROWS(paired_spec(3, 2));
}

TEST_CASE("dataset directory holds rasters, manifest and provenance") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "catnet_synth_ds";
  fs::remove_all(dir);
  auto spec = paired_spec(4, 1);
  spec.samples_per_class = 2;
  const auto ds = generate_dataset(spec, dir);
  CHECK(ds.manifest.samples.size() == 8);
  CHECK(fs::exists(dir / "manifest.jsonl"));
  std::ifstream prov(dir / "provenance.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(prov, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("center_motif"));
    ++lines;
  }
  CHECK(lines == 8);
  const auto& ref = ds.manifest.samples[5];
  CHECK(read_png(dir / ref.center) == render_sample(ref.label, spec, sample_noise_seed(spec, 5)).center);
  CHECK(ds.manifest.taxonomy.parents.size() == 3);
}

TEST_CASE("mosaic layout keeps the label in the middle tile") {
  GeneratorSpec spec;
  spec.num_classes = 4;
  spec.layout = Layout::mosaic;
  spec.motif_noise = 0.0;
  const auto a = render_sample(2, spec, 9);
  const auto b = render_sample(2, spec, 10);
  CHECK(a.center.width == 32);
  CHECK_FALSE(a.surrounding == b.surrounding);
  const auto m = render_mosaic(spec, {{0, 1, 2}, {3, 0, 1}}, 16, 4);
  CHECK(m.width == 48);
  CHECK(m.height == 32);
}
