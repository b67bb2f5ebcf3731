// Python bindings. Structured values cross the boundary as JSON text; the
// catnet package turns them into dicts.
#include "catnet/checkpoint.hpp"
#include "catnet/config.hpp"
#include "catnet/mapping.hpp"
#include "catnet/synthetic.hpp"
#include "catnet/trainer.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;
using namespace catnet;

namespace {

fs::path manifest_path(const fs::path& data) { return fs::is_directory(data) ? data / "manifest.jsonl" : data; }

RgbImage to_image(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  require(a.ndim() == 3 && a.shape(2) == 3, "image must be an H x W x 3 uint8 array");
  RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<std::uint8_t> from_image(const RgbImage& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

GeneratorSpec generator_spec(const KeyValues& kv) {
  GeneratorSpec spec;
  apply_generator_config(kv, spec);
  return spec;
}

TrainConfig train_config(const std::string& config_json) {
  return config_json.empty() ? profile_config("toy") : TrainConfig::from_json(json::parse(config_json));
}

}  // namespace

PYBIND11_MODULE(_catnet, m) {
  m.doc() = "Native core of catnet";

  py::register_exception<Error>(m, "CatnetError", PyExc_RuntimeError);

  m.def("overall_accuracy", [](const std::vector<int>& p, const std::vector<int>& l) { return overall_accuracy(p, l); });
  m.def(
      "balanced_accuracy",
      [](const std::vector<int>& p, const std::vector<int>& l, const std::vector<int>& classes, bool skip_empty) {
        return balanced_accuracy(p, l, classes, skip_empty);
      },
      py::arg("preds"), py::arg("labels"), py::arg("classes"), py::arg("skip_empty") = true);
  m.def("bucket_categories", [](const std::map<int, std::int64_t>& counts) {
    return bucket_categories(counts, BucketSpec{});
  });
  m.def(
      "metric_report",
      [](const std::vector<int>& p, const std::vector<int>& l, int num_classes,
         const std::map<int, std::int64_t>& train_counts) {
        ReportOptions o;
        o.skip_empty = true;
        if (!train_counts.empty()) o.buckets = bucket_categories(train_counts, BucketSpec{});
        return make_report(p, l, num_classes, o).to_json().dump();
      },
      py::arg("preds"), py::arg("labels"), py::arg("num_classes"),
      py::arg("train_counts") = std::map<int, std::int64_t>{});

  m.def("profile_config", [](const std::string& name) { return profile_config(name).to_json().dump(); });
  m.def("parameter_count", [](const std::string& model_json) {
    const auto cfg = ModelConfig::from_json(json::parse(model_json));
    return py::make_tuple(parameter_count(cfg), backbone_parameter_count(cfg.encoder));
  });

  m.def("bayes_center_accuracy",
        [](const KeyValues& kv) { return bayes_center_accuracy(generator_spec(kv)); });
  m.def("render_sample", [](const KeyValues& kv, int cls, std::uint64_t noise_seed) {
    const auto s = render_sample(cls, generator_spec(kv), noise_seed);
    return py::make_tuple(from_image(s.center), from_image(s.surrounding), from_image(s.global));
  });
  m.def(
      "generate_dataset",
      [](const KeyValues& kv, const fs::path& out_dir, bool split) {
        const auto spec = generator_spec(kv);
        auto ds = generate_dataset(spec, out_dir);
        if (split) {
          ds.manifest = split_dataset(ds.manifest, {}, spec.seed);
          save_manifest(ds.manifest, out_dir / "manifest.jsonl");
        }
        return (out_dir / "manifest.jsonl").string();
      },
      py::arg("spec"), py::arg("out_dir"), py::arg("split") = true);

  m.def(
      "train",
      [](const fs::path& data, const fs::path& checkpoint, const std::string& config_json) {
        const auto manifest = load_manifest(manifest_path(data));
        const auto cfg = train_config(config_json);
        require(manifest.taxonomy.num_classes() == cfg.model.num_classes, "class count differs from the taxonomy");
        const auto train_set = prepare_split(manifest, Split::train, cfg.model.encoder);
        const auto val_set = prepare_split(manifest, Split::val, cfg.model.encoder);
        std::optional<TrainResult> result;
        {
          py::gil_scoped_release release;
          result.emplace(train(cfg, train_set, val_set));
        }
        const auto& r = *result;
        save_checkpoint(r.model, checkpoint,
                        {{"train_config", cfg.to_json()},
                         {"best_step", r.log.best_step},
                         {"best_val_ba", r.log.best_val_ba}});
        return json{{"checkpoint", checkpoint.string()},
                    {"best_step", r.log.best_step},
                    {"best_val_ba", r.log.best_val_ba},
                    {"params_total", r.log.params_total},
                    {"params_trainable", r.log.params_trainable}}
            .dump();
      },
      py::arg("data"), py::arg("checkpoint"), py::arg("config") = "");
  m.def(
      "evaluate",
      [](const fs::path& checkpoint, const fs::path& data, const std::string& split) {
        const auto ckpt = load_checkpoint(checkpoint);
        const auto manifest = load_manifest(manifest_path(data));
        const auto samples = prepare_split(manifest, parse_split(split), ckpt.model.config().encoder);
        py::gil_scoped_release release;
        return evaluate(ckpt.model, samples).report.to_json().dump();
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("split") = "test");
  m.def("predict", [](const fs::path& checkpoint, py::array_t<std::uint8_t> center, py::array_t<std::uint8_t> surr,
                      py::array_t<std::uint8_t> global) {
    const auto ckpt = load_checkpoint(checkpoint);
    SceneSample s;
    s.center = to_image(center);
    s.surrounding = to_image(surr);
    s.global = to_image(global);
    const auto out = ckpt.model.forward(prepare_sample(s, ckpt.model.config().encoder));
    return py::make_tuple(out.predicted, std::vector<double>(out.prediction.begin(), out.prediction.end()));
  });
  m.def(
      "gradient_check",
      [](const std::string& config_json, int max_coordinates, std::uint64_t seed) {
        const auto cfg = train_config(config_json);
        Model model(cfg.model);
        randomize_trainable(model, 0.3, seed);
        GeneratorSpec s;
        s.num_classes = cfg.model.num_classes;
        s.clutter = 4;
        const auto sample = prepare_sample(render_sample(0, s, 7), cfg.model.encoder);
        GradCheckOptions o;
        o.max_coordinates = max_coordinates;
        const auto r = gradient_check(model, sample, 0, o);
        return py::make_tuple(r.max_rel_error, r.entries.size(), r.passed());
      },
      py::arg("config") = "", py::arg("max_coordinates") = 0, py::arg("seed") = 1);

  m.def(
      "map_region",
      [](const fs::path& checkpoint, py::array_t<std::uint8_t> raster, int block, const std::string& remap_json) {
        const auto ckpt = load_checkpoint(checkpoint);
        RemapTable remap;
        if (remap_json.empty()) {
          std::vector<std::string> names;
          for (int c = 0; c < ckpt.model.config().num_classes; ++c) names.push_back("class_" + std::to_string(c));
          remap = RemapTable::identity(names);
        } else {
          remap = RemapTable::from_json(json::parse(remap_json));
        }
        return map_region(to_image(raster), ckpt.model, remap, block).to_json().dump();
      },
      py::arg("checkpoint"), py::arg("raster"), py::arg("block"), py::arg("remap") = "");
  m.def("score_map", [](const std::string& map_json, const std::string& annotations_json) {
    const auto map = BlockMap::from_json(json::parse(map_json));
    return score_map(map, annotations_from_json(json::parse(annotations_json), map.targets)).to_json().dump();
  });
}
