#include "catnet/config.hpp"

#include <fstream>
#include <sstream>

namespace catnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(), "config key " + key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty() && v[0] != '-', "config key " + key + ": expected a seed, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(), "config key " + key + ": expected a number, got '" + v + "'");
  return out;
}

}  // namespace

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("expected a boolean, got '" + text + "'");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "config line " + std::to_string(n) + ": empty key");
    require(kv.emplace(key, trim(line.substr(eq + 1))).second,
            "config line " + std::to_string(n) + ": duplicate key " + key);
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

TrainConfig profile_config(const std::string& name) {
  TrainConfig c;
  c.profile = name;
  if (name == "toy") {
    c.adam.learning_rate = 3e-3;
    c.epochs = 12;
    return c;
  }
  if (name == "tiny") {
    c.model.num_classes = 3;
    c.model.adapter.activation = Activation::gelu;
    c.adam.learning_rate = 1e-3;
    return c;
  }
  throw Error("unknown profile: " + name + " (expected toy or tiny)");
}

void apply_train_config(const KeyValues& kv, TrainConfig& c) {
  for (const auto& [key, v] : kv) {
    auto& m = c.model;
    if (key == "profile") continue;  // selected before applying the rest
    else if (key == "optimizer") require(v == "adam", "only the adam optimizer is supported");
    else if (key == "learning_rate") c.adam.learning_rate = to_double(key, v);
    else if (key == "beta1") c.adam.beta1 = to_double(key, v);
    else if (key == "beta2") c.adam.beta2 = to_double(key, v);
    else if (key == "eps") c.adam.eps = to_double(key, v);
    else if (key == "batch_size") c.batch_size = to_int(key, v);
    else if (key == "steps") c.steps = to_int(key, v);
    else if (key == "epochs") c.epochs = to_int(key, v);
    else if (key == "eval_every") c.eval_every = to_int(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "model_seed") m.seed = to_u64(key, v);
    else if (key == "backbone_seed") m.backbone_seed = to_u64(key, v);
    else if (key == "fusion") m.fusion = parse_fusion(v);
    else if (key == "acf") m.acf = parse_bool(v);
    else if (key == "mls") m.mls = parse_bool(v);
    else if (key == "aft") m.aft = parse_bool(v);
    else if (key == "num_classes") m.num_classes = to_int(key, v);
    else if (key == "input_resize") m.encoder.input_resize = to_int(key, v);
    else if (key == "patch_size") m.encoder.patch_size = to_int(key, v);
    else if (key == "embed_dim") m.encoder.embed_dim = to_int(key, v);
    else if (key == "depth") m.encoder.depth = to_int(key, v);
    else if (key == "num_heads") m.encoder.num_heads = to_int(key, v);
    else if (key == "window_size") m.encoder.window_size = to_int(key, v);
    else if (key == "mlp_ratio") m.encoder.mlp_ratio = to_int(key, v);
    else if (key == "adapter_bottleneck") m.adapter.bottleneck_dim = to_int(key, v);
    else if (key == "adapter_scale") m.adapter.scale = to_double(key, v);
    else if (key == "adapter_activation") m.adapter.activation = parse_activation(v);
    else if (key == "acf_heads") m.acf_heads = to_int(key, v);
    else if (key == "acf_query") {
      require(v == "pooled" || v == "tokens", "acf_query must be pooled or tokens");
      m.acf_options.query = v == "pooled" ? AcfQuery::pooled : AcfQuery::tokens;
    } else if (key == "global_kv_with_surrounding") m.acf_options.global_kv_with_surrounding = parse_bool(v);
    else throw Error("unknown config key: " + key);
  }
}

std::vector<std::vector<int>> parse_groups(const std::string& text) {
  std::vector<std::vector<int>> out;
  if (trim(text).empty()) return out;
  for (const auto& g : split(text, ';')) {
    std::vector<int> group;
    for (const auto& c : split(g, ',')) group.push_back(to_int("groups", c));
    out.push_back(std::move(group));
  }
  return out;
}

void apply_generator_config(const KeyValues& kv, GeneratorSpec& s) {
  std::optional<int> pairs;
  for (const auto& [key, v] : kv) {
    if (key == "classes" || key == "num_classes") s.num_classes = to_int(key, v);
    else if (key == "pairs") pairs = to_int(key, v);
    else if (key == "groups") s.ambiguity_groups = parse_groups(v);
    else if (key == "prior") {
      require(v == "uniform" || v == "zipf", "prior must be uniform or zipf");
      s.class_prior.kind = v == "uniform" ? PriorKind::uniform : PriorKind::zipf;
    } else if (key == "zipf_exponent") s.class_prior.exponent = to_double(key, v);
    else if (key == "noise" || key == "motif_noise") s.motif_noise = to_double(key, v);
    else if (key == "samples_per_class") s.samples_per_class = to_int(key, v);
    else if (key == "sizes") {
      const auto parts = split(v, ',');
      require(parts.size() == 3, "sizes must list three integers");
      for (int i = 0; i < 3; ++i) s.image_sizes[i] = to_int(key, parts[i]);
    } else if (key == "seed") s.seed = to_u64(key, v);
    else if (key == "layout") {
      require(v == "scene" || v == "mosaic", "layout must be scene or mosaic");
      s.layout = v == "scene" ? Layout::scene : Layout::mosaic;
    } else if (key == "clutter") s.clutter = to_int(key, v);
    else throw Error("unknown generator key: " + key);
  }
  if (pairs) s.ambiguity_groups = paired_spec(s.num_classes, *pairs).ambiguity_groups;
}

}  // namespace catnet
