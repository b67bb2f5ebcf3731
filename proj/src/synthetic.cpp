#include "catnet/synthetic.hpp"

#include "catnet/params.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <cstdio>
#include <random>
#include <set>

namespace catnet {

using nlohmann::json;

std::vector<double> ClassPrior::probabilities(int num_classes) const {
  require(num_classes > 0, "prior needs at least one class");
  std::vector<double> p(num_classes, 1.0);
  if (kind == PriorKind::zipf) {
    require(std::isfinite(exponent) && exponent >= 0.0, "unsatisfiable prior: zipf exponent must be finite and >= 0");
    for (int k = 0; k < num_classes; ++k) p[k] = std::pow(k + 1.0, -exponent);
  }
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v /= total;
  return p;
}

void GeneratorSpec::validate() const {
  require(num_classes > 0, "num_classes must be positive");
  require(samples_per_class > 0, "samples_per_class must be positive");
  require(motif_noise >= 0.0 && std::isfinite(motif_noise), "motif_noise must be >= 0");
  require(clutter >= 0, "clutter must be >= 0");
  validate_sizes(image_sizes);
  std::set<int> seen;
  for (const auto& g : ambiguity_groups) {
    require(!g.empty(), "empty ambiguity group");
    require(static_cast<int>(g.size()) <= num_classes, "ambiguity group larger than num_classes");
    for (int c : g) {
      require(c >= 0 && c < num_classes, "ambiguity group names unknown class " + std::to_string(c));
      require(seen.insert(c).second, "class " + std::to_string(c) + " appears in two ambiguity groups");
    }
  }
  (void)class_prior.probabilities(num_classes);
}

std::vector<std::vector<int>> GeneratorSpec::groups() const {
  std::vector<std::vector<int>> out = ambiguity_groups;
  std::vector<bool> covered(num_classes, false);
  for (const auto& g : out)
    for (int c : g) covered[c] = true;
  for (int c = 0; c < num_classes; ++c)
    if (!covered[c]) out.push_back({c});
  return out;
}

std::vector<int> GeneratorSpec::group_of_class() const {
  std::vector<int> out(num_classes, -1);
  const auto gs = groups();
  for (std::size_t g = 0; g < gs.size(); ++g)
    for (int c : gs[g]) out[c] = static_cast<int>(g);
  return out;
}

GeneratorSpec paired_spec(int num_classes, int pairs) {
  require(2 * pairs <= num_classes, "too many pairs for the class count");
  GeneratorSpec spec;
  spec.num_classes = num_classes;
  for (int k = 0; k < pairs; ++k) spec.ambiguity_groups.push_back({2 * k, 2 * k + 1});
  return spec;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

constexpr double kGolden = 0.6180339887498949;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Oriented sinusoidal stripes keyed by a motif id (the ambiguity group).
struct StripeMotif {
  double cos_a, sin_a, period;
  Rgb light, dark;

  explicit StripeMotif(int id) {
    const double angle = std::fmod(0.1 + id * kGolden, 1.0) * std::numbers::pi;
    cos_a = std::cos(angle);
    sin_a = std::sin(angle);
    static constexpr double periods[] = {0.22, 0.3, 0.4};
    period = periods[id % 3];
    const double hue = std::fmod(0.05 + id * 0.3819660112501051, 1.0);
    light = hsv(hue, 0.55, 0.85);
    dark = hsv(hue + 0.08, 0.7, 0.3);
  }

  Rgb at(double u, double v, double phase) const {
    const double w = 0.5 + 0.5 * std::sin(kTwoPi * (u * cos_a + v * sin_a) / period + phase);
    return {dark.r + w * (light.r - dark.r), dark.g + w * (light.g - dark.g), dark.b + w * (light.b - dark.b)};
  }
};

// Landmark palette: stripes alternate between a bright and a dark shade of the class hue;
// distractors use the flat mean of the two, so texture rather than color marks the landmark.
double landmark_hue(int cls) { return 0.13 + cls * kGolden; }
Rgb landmark_light(int cls) { return hsv(landmark_hue(cls), 0.9, 0.95); }
Rgb landmark_dark(int cls) { return hsv(landmark_hue(cls), 0.9, 0.45); }
Rgb landmark_mean(int cls) { return hsv(landmark_hue(cls), 0.9, 0.7); }

constexpr Rgb kBackground{0.45, 0.45, 0.42};

struct Canvas {
  int size;
  double unit;  // pixels per center side
  std::vector<double> px;

  Canvas(int size_px, double unit_px) : size(size_px), unit(unit_px), px(3 * size_px * size_px) {}

  double coord(int i) const { return (i + 0.5) / unit - 0.5 * size / unit; }
  void set(int x, int y, const Rgb& c) {
    double* p = &px[3 * (static_cast<std::size_t>(y) * size + x)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
};

void fill_stripes(Canvas& cv, int x0, int y0, int w, const StripeMotif& motif, double phase) {
  for (int y = y0; y < y0 + w; ++y)
    for (int x = x0; x < x0 + w; ++x) cv.set(x, y, motif.at(cv.coord(x), -cv.coord(y), phase));
}

void add_noise_and_quantize(const Canvas& cv, double noise, std::uint64_t seed, RgbImage& out) {
  out.width = out.height = cv.size;
  out.pixels.resize(cv.px.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < cv.px.size(); ++i) {
    double v = cv.px[i];
    if (noise > 0.0) v += noise * gauss(rng);
    v = std::clamp(v, 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
}

RgbImage crop(const RgbImage& img, int x0, int size) {
  RgbImage out;
  out.width = out.height = size;
  out.pixels.resize(3 * static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    std::copy_n(&img.pixels[3 * (static_cast<std::size_t>(y + x0) * img.width + x0)], 3 * size,
                &out.pixels[3 * static_cast<std::size_t>(y) * size]);
  return out;
}

// Axis-aligned 1.2 x 0.45 band: `along` runs the long side.
struct Band {
  double cx, cy;
  bool vertical;

  bool contains(double u, double v, double* along) const {
    const double a = vertical ? v - cy : u - cx, b = vertical ? u - cx : v - cy;
    *along = a;
    return std::abs(a) <= 0.6 && std::abs(b) <= 0.225;
  }
};

void render_scene_context(Canvas& cv, int cls, int num_classes, int clutter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) cv.set(x, y, kBackground);

  struct Distractor {
    bool disc;
    Band band;
    double r;
    Rgb color;
  };
  std::vector<Distractor> items;
  for (int k = 0; k < clutter; ++k) {
    Distractor d;
    d.disc = U(rng) < 0.5;
    d.band = {-2.5 + 5.0 * U(rng), -2.5 + 5.0 * U(rng), U(rng) < 0.5};
    d.r = 0.15 + 0.15 * U(rng);
    d.color = landmark_mean(static_cast<int>(U(rng) * num_classes) % num_classes);
    items.push_back(d);
  }
  // The landmark sits on a random side of the center, 1.0 from the middle.
  const int side = static_cast<int>(U(rng) * 4.0) % 4;
  const double offset = -0.5 + U(rng);
  const double phase = kTwoPi * U(rng);
  Band landmark{};
  switch (side) {
    case 0: landmark = {offset, 1.0, false}; break;
    case 1: landmark = {1.0, offset, true}; break;
    case 2: landmark = {offset, -1.0, false}; break;
    default: landmark = {-1.0, offset, true}; break;
  }
  const Rgb light = landmark_light(cls), dark = landmark_dark(cls);

  for (int y = 0; y < cv.size; ++y) {
    const double v = -cv.coord(y);
    for (int x = 0; x < cv.size; ++x) {
      const double u = cv.coord(x);
      double along = 0.0;
      for (const auto& d : items) {
        const bool hit = d.disc ? (u - d.band.cx) * (u - d.band.cx) + (v - d.band.cy) * (v - d.band.cy) <= d.r * d.r
                                : d.band.contains(u, v, &along);
        if (hit) cv.set(x, y, d.color);
      }
      if (landmark.contains(u, v, &along)) {
        const double w = 0.5 + 0.5 * std::sin(kTwoPi * along / 0.3 + phase);
        cv.set(x, y, {dark.r + w * (light.r - dark.r), dark.g + w * (light.g - dark.g), dark.b + w * (light.b - dark.b)});
      }
    }
  }
}

void render_mosaic_tiles(Canvas& cv, const std::vector<std::vector<int>>& grid, const std::vector<int>& group_of,
                         int tile, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      const StripeMotif motif(group_of.at(grid[r][c]));
      fill_stripes(cv, static_cast<int>(c) * tile, static_cast<int>(r) * tile, tile, motif, kTwoPi * U(rng));
    }
}

}  // namespace

SceneSample render_sample(int cls, const GeneratorSpec& spec, std::uint64_t noise_seed) {
  require(cls >= 0 && cls < spec.num_classes, "class out of range");
  const auto group_of = spec.group_of_class();
  const int c = spec.image_sizes[0];
  const int g = spec.image_sizes[2];
  Canvas cv(g, c);
  std::mt19937_64 center_rng(derive_seed(noise_seed, 1));
  std::mt19937_64 context_rng(derive_seed(noise_seed, 2));
  std::uniform_real_distribution<double> U(0.0, 1.0);

  if (spec.layout == Layout::scene) {
    render_scene_context(cv, cls, spec.num_classes, spec.clutter, context_rng);
  } else {
    std::uniform_int_distribution<int> pick(0, spec.num_classes - 1);
    std::vector<std::vector<int>> grid(5, std::vector<int>(5));
    for (auto& row : grid)
      for (int& k : row) k = pick(context_rng);
    grid[2][2] = cls;
    render_mosaic_tiles(cv, grid, group_of, c, context_rng);
  }
  // The center square depends only on the group and the center stream.
  fill_stripes(cv, 2 * c, 2 * c, c, StripeMotif(group_of[cls]), kTwoPi * U(center_rng));

  RgbImage world;
  add_noise_and_quantize(cv, spec.motif_noise, derive_seed(noise_seed, 3), world);
  SceneSample s;
  s.label = cls;
  s.center = crop(world, 2 * c, c);
  s.surrounding = crop(world, c, 3 * c);
  s.global = std::move(world);
  return s;
}

std::vector<int> sample_labels(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t total = static_cast<std::size_t>(spec.samples_per_class) * spec.num_classes;
  std::vector<int> labels(total);
  if (spec.class_prior.kind == PriorKind::uniform) {
    for (std::size_t i = 0; i < total; ++i) labels[i] = static_cast<int>(i % spec.num_classes);
    return labels;
  }
  const auto p = spec.class_prior.probabilities(spec.num_classes);
  std::mt19937_64 rng(derive_seed(spec.seed, 0x9a11));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  for (auto& l : labels) {
    const double u = U(rng);
    l = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin());
  }
  return labels;
}

std::uint64_t sample_noise_seed(const GeneratorSpec& spec, std::size_t index) {
  return derive_seed(derive_seed(spec.seed, 0x5eed), index);
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", index);
  return buf;
}

std::vector<SceneSample> generate_samples(const GeneratorSpec& spec, std::vector<ProvenanceRecord>* provenance) {
  const auto labels = sample_labels(spec);
  const auto group_of = spec.group_of_class();
  std::vector<SceneSample> out;
  out.reserve(labels.size());
  if (provenance) provenance->clear();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto seed = sample_noise_seed(spec, i);
    out.push_back(render_sample(labels[i], spec, seed));
    out.back().id = sample_id(i);
    if (provenance) {
      const int group = group_of[labels[i]];
      provenance->push_back(
          {out.back().id, labels[i], group, group, spec.layout == Layout::scene ? labels[i] : -1, seed});
    }
  }
  return out;
}

CategoryTaxonomy synthetic_taxonomy(const GeneratorSpec& spec) {
  CategoryTaxonomy t;
  const auto gs = spec.groups();
  for (std::size_t g = 0; g < gs.size(); ++g) t.parents.push_back({static_cast<int>(g), "group_" + std::to_string(g)});
  const auto group_of = spec.group_of_class();
  for (int c = 0; c < spec.num_classes; ++c) {
    t.leaves.push_back({c, "class_" + std::to_string(c)});
    t.leaf_to_parent[c] = group_of[c];
  }
  return t;
}

void write_provenance(const std::vector<ProvenanceRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  for (const auto& r : records)
    out << json{{"id", r.sample_id},
                {"class", r.cls},
                {"group", r.group},
                {"center_motif", r.center_motif},
                {"context_motif", r.context_motif},
                {"noise_seed", r.noise_seed}}
               .dump()
        << '\n';
}

GeneratedDataset generate_dataset(const GeneratorSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  GeneratedDataset ds;
  ds.manifest.taxonomy = synthetic_taxonomy(spec);
  ds.manifest.sizes = spec.image_sizes;
  ds.manifest.root = out_dir;
  const auto labels = sample_labels(spec);
  const auto group_of = spec.group_of_class();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto seed = sample_noise_seed(spec, i);
    const auto s = render_sample(labels[i], spec, seed);
    const auto id = sample_id(i);
    SampleRef ref;
    ref.id = id;
    ref.label = labels[i];
    ref.center = fs::path("images") / (id + "_c.png");
    ref.surrounding = fs::path("images") / (id + "_s.png");
    ref.global = fs::path("images") / (id + "_g.png");
    write_png(out_dir / ref.center, s.center);
    write_png(out_dir / ref.surrounding, s.surrounding);
    write_png(out_dir / ref.global, s.global);
    ds.manifest.samples.push_back(std::move(ref));
    const int group = group_of[labels[i]];
    ds.provenance.push_back({id, labels[i], group, group, spec.layout == Layout::scene ? labels[i] : -1, seed});
  }
  save_manifest(ds.manifest, out_dir / "manifest.jsonl");
  write_provenance(ds.provenance, out_dir / "provenance.jsonl");
  return ds;
}

double bayes_center_accuracy(const GeneratorSpec& spec) {
  spec.validate();
  const auto p = spec.class_prior.probabilities(spec.num_classes);
  double acc = 0.0;
  for (const auto& g : spec.groups()) {
    double best = 0.0;
    for (int c : g) best = std::max(best, p[c]);
    acc += best;
  }
  return acc;
}

RgbImage render_mosaic(const GeneratorSpec& spec, const std::vector<std::vector<int>>& class_grid, int tile_px,
                       std::uint64_t seed) {
  require(!class_grid.empty() && !class_grid[0].empty(), "empty class grid");
  require(tile_px > 0, "tile size must be positive");
  const std::size_t cols = class_grid[0].size();
  for (const auto& row : class_grid) {
    require(row.size() == cols, "class grid rows must have equal length");
    for (int k : row) require(k >= 0 && k < spec.num_classes, "class grid names unknown class " + std::to_string(k));
  }
  const auto group_of = spec.group_of_class();
  const int w = static_cast<int>(cols) * tile_px, h = static_cast<int>(class_grid.size()) * tile_px;
  // Render on a square canvas large enough, then crop to w x h.
  Canvas cv(std::max(w, h), tile_px);
  std::mt19937_64 rng(derive_seed(seed, 1));
  render_mosaic_tiles(cv, class_grid, group_of, tile_px, rng);
  RgbImage full;
  add_noise_and_quantize(cv, spec.motif_noise, derive_seed(seed, 3), full);
  RgbImage out;
  out.width = w;
  out.height = h;
  out.pixels.resize(3 * static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    std::copy_n(&full.pixels[3 * static_cast<std::size_t>(y) * full.width], 3 * w,
                &out.pixels[3 * static_cast<std::size_t>(y) * w]);
  return out;
}

}  // namespace catnet
