#include "catnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace catnet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_tensor(std::vector<std::uint8_t>& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put(out, static_cast<float>(m.data()[i]));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  template <class T>
  T get() {
    require(pos + sizeof(T) <= bytes.size(), "checkpoint truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

ParamGroup parse_group(const std::string& s) {
  for (auto g : {ParamGroup::backbone, ParamGroup::adapter, ParamGroup::acf, ParamGroup::head})
    if (to_string(g) == s) return g;
  throw Error("checkpoint: unknown parameter group " + s);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const json& extra) {
  json tensors = json::array();
  for (const auto& p : model.params().all())
    tensors.push_back({{"name", p->name}, {"group", std::string(to_string(p->group))}, {"rows", p->value.rows()},
                       {"cols", p->value.cols()}});
  const std::string meta = json{{"config", model.config().to_json()}, {"tensors", tensors}, {"extra", extra}}.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  for (const auto& p : model.params().all()) put_tensor(out, p->value);
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const json& extra) {
  const auto bytes = serialize_checkpoint(model, extra);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "failed writing checkpoint " + path.string());
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 20 && std::memcmp(bytes.data(), kCheckpointMagic, 8) == 0, "not a checkpoint (bad magic)");
  Reader r{bytes, 8};
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
  const auto len = r.get<std::uint64_t>();
  require(r.pos + len <= bytes.size(), "checkpoint truncated");
  const json meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + len));
  r.pos += len;
  Model model(ModelConfig::from_json(meta.at("config")));
  const auto& tensors = meta.at("tensors");
  require(tensors.size() == model.params().all().size(), "checkpoint tensor list does not match its config");
  for (const auto& t : tensors) {
    Param& p = model.params().at(t.at("name").get<std::string>());
    require(p.group == parse_group(t.at("group")), "checkpoint group mismatch for " + p.name);
    require(p.value.rows() == t.at("rows").get<Eigen::Index>() && p.value.cols() == t.at("cols").get<Eigen::Index>(),
            "checkpoint shape mismatch for " + p.name);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = r.get<float>();
  }
  require(r.pos == bytes.size(), "trailing bytes after checkpoint tensors");
  return {std::move(model), meta.value("extra", json::object())};
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::vector<std::uint8_t> group_bytes(const ParamStore& store, ParamGroup group) {
  std::vector<std::uint8_t> out;
  for (const auto& p : store.all())
    if (p->group == group) put_tensor(out, p->value);
  return out;
}

}  // namespace catnet
