#include "catnet/data_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace catnet {

using nlohmann::json;

int CategoryTaxonomy::index_of_id(int leaf_id) const {
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (leaves[i].id == leaf_id) return static_cast<int>(i);
  return -1;
}

int CategoryTaxonomy::index_of_name(const std::string& name) const {
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (leaves[i].name == name) return static_cast<int>(i);
  return -1;
}

void CategoryTaxonomy::validate() const {
  require(!leaves.empty(), "taxonomy has no leaf categories");
  std::set<int> leaf_ids, parent_ids;
  std::set<std::string> leaf_names;
  for (const auto& l : leaves) {
    require(leaf_ids.insert(l.id).second, "duplicate leaf id " + std::to_string(l.id));
    require(leaf_names.insert(l.name).second, "duplicate leaf name " + l.name);
  }
  for (const auto& p : parents) require(parent_ids.insert(p.id).second, "duplicate parent id " + std::to_string(p.id));
  for (const auto& l : leaves) {
    auto it = leaf_to_parent.find(l.id);
    require(it != leaf_to_parent.end(), "leaf " + l.name + " has no parent");
    require(parent_ids.contains(it->second), "leaf " + l.name + " maps to unknown parent " + std::to_string(it->second));
  }
  require(leaf_to_parent.size() == leaves.size(), "leaf_to_parent names unknown leaves");
}

CategoryTaxonomy CategoryTaxonomy::flat(int num_classes) {
  CategoryTaxonomy t;
  t.parents.push_back({0, "all"});
  for (int i = 0; i < num_classes; ++i) {
    t.leaves.push_back({i, "class_" + std::to_string(i)});
    t.leaf_to_parent[i] = 0;
  }
  return t;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "none" || name.empty()) return Split::none;
  throw Error("unknown split tag: " + name);
}

std::vector<const SampleRef*> DatasetManifest::in_split(Split split) const {
  std::vector<const SampleRef*> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(&s);
  return out;
}

std::vector<std::int64_t> DatasetManifest::class_counts(std::optional<Split> split) const {
  std::vector<std::int64_t> counts(taxonomy.num_classes(), 0);
  for (const auto& s : samples)
    if (!split || s.split == *split) ++counts[s.label];
  return counts;
}

ManifestError::ManifestError(int line, const std::string& message)
    : Error(line > 0 ? "manifest line " + std::to_string(line) + ": " + message : "manifest: " + message),
      line_(line) {}

void validate_sizes(const std::array<int, 3>& sizes) {
  require(sizes[0] > 0 && sizes[1] == 3 * sizes[0] && sizes[2] == 5 * sizes[0],
          "raster sizes must be concentric with ratios 1:3:5");
}

namespace {

CategoryTaxonomy taxonomy_from_json(const json& j) {
  CategoryTaxonomy t;
  for (const auto& p : j.at("parents")) t.parents.push_back({p.at("id").get<int>(), p.at("name").get<std::string>()});
  for (const auto& l : j.at("leaves")) {
    const int id = l.at("id");
    t.leaves.push_back({id, l.at("name").get<std::string>()});
    require(!t.leaf_to_parent.contains(id), "duplicate leaf id " + std::to_string(id));
    t.leaf_to_parent[id] = l.at("parent").get<int>();
  }
  return t;
}

json taxonomy_to_json(const CategoryTaxonomy& t) {
  json leaves = json::array(), parents = json::array();
  for (const auto& p : t.parents) parents.push_back({{"id", p.id}, {"name", p.name}});
  for (const auto& l : t.leaves) leaves.push_back({{"id", l.id}, {"name", l.name}, {"parent", t.leaf_to_parent.at(l.id)}});
  return {{"leaves", leaves}, {"parents", parents}};
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : root / path;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options,
                              std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ManifestError(0, "cannot open " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError(line_no, std::string("parse error: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!j.contains("taxonomy")) throw ManifestError(line_no, "first line must be the taxonomy header");
        m.taxonomy = taxonomy_from_json(j.at("taxonomy"));
        m.taxonomy.validate();
        if (j.contains("sizes")) m.sizes = j.at("sizes").get<std::array<int, 3>>();
        validate_sizes(m.sizes);
        have_header = true;
        continue;
      }
      SampleRef s;
      s.id = j.at("id").get<std::string>();
      if (!ids.insert(s.id).second) throw ManifestError(line_no, "duplicate sample id " + s.id);
      const auto& label = j.at("label");
      s.label = label.is_string() ? m.taxonomy.index_of_name(label.get<std::string>())
                                  : m.taxonomy.index_of_id(label.get<int>());
      if (s.label < 0) throw ManifestError(line_no, "unknown label " + label.dump() + " for sample " + s.id);
      s.center = j.at("center").get<std::string>();
      s.surrounding = j.at("surrounding").get<std::string>();
      s.global = j.at("global").get<std::string>();
      if (j.contains("split")) s.split = parse_split(j.at("split").get<std::string>());
      if (j.contains("lon")) s.lon = j.at("lon").get<double>();
      if (j.contains("lat")) s.lat = j.at("lat").get<double>();
      if (options.check_files) {
        bool missing = false;
        for (const auto* p : {&s.center, &s.surrounding, &s.global}) {
          if (std::filesystem::exists(resolve(m.root, p->string()))) continue;
          missing = true;
          const std::string msg = "sample " + s.id + ": missing raster " + p->string();
          if (!options.lenient) throw ManifestError(line_no, msg);
          if (warnings) warnings->push_back("line " + std::to_string(line_no) + ": " + msg + " (dropped)");
          break;
        }
        if (missing) continue;
      }
      m.samples.push_back(std::move(s));
    } catch (const ManifestError&) {
      throw;
    } catch (const std::exception& e) {
      throw ManifestError(line_no, e.what());
    }
  }
  if (!have_header) throw ManifestError(0, "empty manifest (no taxonomy header)");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write manifest " + path.string());
  out << json{{"taxonomy", taxonomy_to_json(m.taxonomy)}, {"sizes", m.sizes}}.dump() << '\n';
  for (const auto& s : m.samples) {
    json j{{"id", s.id},
           {"label", m.taxonomy.leaves.at(s.label).id},
           {"center", s.center.string()},
           {"surrounding", s.surrounding.string()},
           {"global", s.global.string()},
           {"split", to_string(s.split)}};
    if (s.lon) j["lon"] = *s.lon;
    if (s.lat) j["lat"] = *s.lat;
    out << j.dump() << '\n';
  }
}

SceneSample load_sample(const DatasetManifest& m, const SampleRef& ref) {
  SceneSample s;
  s.id = ref.id;
  s.label = ref.label;
  s.center = read_png(resolve(m.root, ref.center.string()));
  s.surrounding = read_png(resolve(m.root, ref.surrounding.string()));
  s.global = read_png(resolve(m.root, ref.global.string()));
  auto check = [&](const RgbImage& img, int size, const char* what) {
    require(img.width == size && img.height == size,
            "sample " + ref.id + ": " + what + " raster is " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ", expected " + std::to_string(size));
  };
  check(s.center, m.sizes[0], "center");
  check(s.surrounding, m.sizes[1], "surrounding");
  check(s.global, m.sizes[2], "global");
  if (ref.lon && ref.lat) s.geo = std::make_pair(*ref.lon, *ref.lat);
  return s;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& r, std::uint64_t seed,
                              std::vector<std::string>* warnings) {
  require(r.train > 0 && r.val > 0 && r.test > 0, "split ratios must be positive");
  require(std::abs(r.train + r.val + r.test - 1.0) <= 1e-9, "split ratios must sum to 1");
  DatasetManifest out = manifest;
  std::vector<std::vector<std::size_t>> by_class(out.taxonomy.num_classes());
  for (std::size_t i = 0; i < out.samples.size(); ++i) by_class[out.samples[i].label].push_back(i);
  for (int c = 0; c < out.taxonomy.num_classes(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) {
      if (warnings) warnings->push_back("class " + out.taxonomy.leaves[c].name + " has no samples; skipped");
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_val = static_cast<std::size_t>(std::floor(r.val * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(r.test * n + 1e-9));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Split s = Split::train;
      if (k < n_val) s = Split::val;
      else if (k < n_val + n_test) s = Split::test;
      out.samples[idx[k]].split = s;
    }
  }
  return out;
}

void BucketSpec::validate() const {
  require(!buckets.empty(), "bucket spec is empty");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    require(buckets[i].lo < buckets[i].hi, "bucket " + buckets[i].name + " is empty or inverted");
    if (i > 0) require(buckets[i].lo == buckets[i - 1].hi, "buckets must be contiguous and ascending");
  }
}

std::map<int, std::string> bucket_categories(const std::map<int, std::int64_t>& counts, const BucketSpec& spec) {
  spec.validate();
  std::map<int, std::string> out;
  for (const auto& [category, count] : counts) {
    auto it = std::find_if(spec.buckets.begin(), spec.buckets.end(),
                           [count](const CountBucket& b) { return count > b.lo && count <= b.hi; });
    require(it != spec.buckets.end(),
            "category " + std::to_string(category) + ": count " + std::to_string(count) + " falls outside all buckets");
    out[category] = it->name;
  }
  return out;
}

}  // namespace catnet
