// Command-line front end: dataset generation, training, evaluation, diagnostics and block mapping.
#include "catnet/checkpoint.hpp"
#include "catnet/config.hpp"
#include "catnet/mapping.hpp"
#include "catnet/synthetic.hpp"
#include "catnet/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace catnet;

namespace {

fs::path manifest_path(const fs::path& data) { return fs::is_directory(data) ? data / "manifest.jsonl" : data; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path.string());
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out << text;
}

struct TrainFlags {
  std::string profile = "toy";
  std::string config;
  std::optional<std::string> fusion;
  std::optional<std::string> acf, mls, aft;
  std::optional<double> lr;
  std::optional<int> batch_size, steps, epochs;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "Starting profile (toy, tiny)");
    app->add_option("--config", config, "key = value config file");
    app->add_option("--fusion", fusion, "cat, input, feature, decision, center-only");
    app->add_option("--acf", acf, "Adaptive context fusion on/off (true/false)");
    app->add_option("--mls", mls, "Multi-level supervision on/off");
    app->add_option("--aft", aft, "Adapter tuning on/off");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--batch-size", batch_size, "Batch size");
    app->add_option("--steps", steps, "Optimizer steps (ignored when --epochs > 0)");
    app->add_option("--epochs", epochs, "Passes over the training split");
    app->add_option("--seed", seed, "Seed for trainable parameters and data order");
  }

  /// With a dataset, the class count follows its taxonomy unless the config file sets it.
  TrainConfig resolve(const DatasetManifest* data = nullptr) const {
    std::string prof = profile;
    KeyValues kv;
    if (!config.empty()) {
      kv = read_key_values(config);
      if (auto it = kv.find("profile"); it != kv.end()) prof = it->second;
    }
    TrainConfig c = profile_config(prof);
    apply_train_config(kv, c);
    if (data && !kv.contains("num_classes")) c.model.num_classes = data->taxonomy.num_classes();
    if (fusion) c.model.fusion = parse_fusion(*fusion);
    if (acf) c.model.acf = parse_bool(*acf);
    if (mls) c.model.mls = parse_bool(*mls);
    if (aft) c.model.aft = parse_bool(*aft);
    if (lr) c.adam.learning_rate = *lr;
    if (batch_size) c.batch_size = *batch_size;
    if (steps) c.steps = *steps, c.epochs = epochs.value_or(0);
    if (epochs) c.epochs = *epochs;
    if (seed) c.seed = *seed, c.model.seed = *seed;
    if (c.model.fusion == FusionKind::center_only || !c.model.acf) c.model.acf = false, c.model.mls = false;
    return c;
  }
};

void check_classes(const DatasetManifest& m, int num_classes) {
  require(m.taxonomy.num_classes() == num_classes,
          "taxonomy has " + std::to_string(m.taxonomy.num_classes()) + " classes but the model expects " +
              std::to_string(num_classes));
}

DatasetManifest load_data(const std::string& data, int num_classes) {
  auto m = load_manifest(manifest_path(data));
  check_classes(m, num_classes);
  return m;
}

std::vector<std::string> class_names(const DatasetManifest& m) {
  std::vector<std::string> out;
  for (const auto& l : m.taxonomy.leaves) out.push_back(l.name);
  return out;
}

ReportOptions bucket_options(const DatasetManifest& m) {
  std::map<int, std::int64_t> counts;
  const auto train_counts = m.class_counts(Split::train);
  for (int c = 0; c < static_cast<int>(train_counts.size()); ++c)
    if (train_counts[c] > 0) counts[c] = train_counts[c];
  ReportOptions o;
  if (counts.size() == train_counts.size()) o.buckets = bucket_categories(counts, BucketSpec{});
  return o;
}

int run(int argc, char** argv) {
  CLI::App app{"Scene classification with auxiliary context: data, training, evaluation and mapping"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Render a synthetic scene-in-scene dataset");
  GeneratorSpec spec;
  std::string gen_config, gen_out, groups, prior = "uniform", sizes, layout = "scene";
  int pairs = -1;
  bool no_split = false;
  gen->add_option("--config", gen_config, "key = value generator config");
  gen->add_option("--classes", spec.num_classes, "Number of classes");
  gen->add_option("--pairs", pairs, "Group classes {0,1}, {2,3}, ... into this many ambiguity pairs");
  gen->add_option("--groups", groups, "Explicit ambiguity groups, e.g. \"0,1;2,3,4\"");
  gen->add_option("--prior", prior, "uniform or zipf");
  gen->add_option("--zipf-exponent", spec.class_prior.exponent, "Zipf exponent");
  gen->add_option("--noise", spec.motif_noise, "Pixel noise std in [0,1] units");
  gen->add_option("--samples-per-class", spec.samples_per_class, "Samples per class (mean count under zipf)");
  gen->add_option("--sizes", sizes, "Center,surrounding,global sizes, e.g. 32,96,160");
  gen->add_option("--clutter", spec.clutter, "Distractor count in the context area");
  gen->add_option("--layout", layout, "scene or mosaic");
  gen->add_option("--seed", spec.seed, "Dataset seed");
  gen->add_flag("--no-split", no_split, "Leave split tags empty");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // split
  auto* spl = app.add_subcommand("split", "Assign train/val/test tags per class");
  std::string spl_data, spl_out;
  SplitRatios ratios;
  std::uint64_t spl_seed = 1;
  spl->add_option("--data", spl_data, "Manifest or dataset directory")->required();
  spl->add_option("--train", ratios.train, "Train fraction");
  spl->add_option("--val", ratios.val, "Validation fraction");
  spl->add_option("--test", ratios.test, "Test fraction");
  spl->add_option("--seed", spl_seed, "Split seed");
  spl->add_option("--out", spl_out, "Output manifest (default: overwrite)");

  // train
  auto* trn = app.add_subcommand("train", "Train a model and save the best-validation checkpoint");
  TrainFlags trn_flags;
  trn_flags.add(trn);
  std::string trn_data, trn_out, trn_log;
  trn->add_option("--data", trn_data, "Manifest or dataset directory")->required();
  trn->add_option("--out", trn_out, "Checkpoint path")->required();
  trn->add_option("--log", trn_log, "Run log (JSON lines)");

  // eval
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string evl_ckpt, evl_data, evl_split = "test", evl_format = "json";
  evl->add_option("--checkpoint", evl_ckpt, "Checkpoint")->required();
  evl->add_option("--data", evl_data, "Manifest or dataset directory")->required();
  evl->add_option("--split", evl_split, "train, val or test");
  evl->add_option("--format", evl_format, "json or table")->check(CLI::IsMember({"json", "table"}));

  // ablate
  auto* abl = app.add_subcommand("ablate", "Train the ablation (or fusion comparison) rows over several seeds");
  TrainFlags abl_flags;
  abl_flags.add(abl);
  std::string abl_data, abl_rows = "ablation";
  std::vector<std::uint64_t> abl_seeds{1, 2, 3};
  abl->add_option("--data", abl_data, "Manifest or dataset directory")->required();
  abl->add_option("--rows", abl_rows, "ablation or fusion")->check(CLI::IsMember({"ablation", "fusion"}));
  abl->add_option("--seeds", abl_seeds, "Seeds")->delimiter(',');

  // gradcheck
  auto* gck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  TrainFlags gck_flags;
  gck_flags.profile = "tiny";
  gck_flags.add(gck);
  GradCheckOptions gck_opts;
  gck->add_option("--tolerance", gck_opts.tolerance, "Flag relative errors at or above this");
  gck->add_option("--max-coords", gck_opts.max_coordinates, "Subsample this many coordinates (0 = all)");
  gck->add_option("--step", gck_opts.step, "Finite-difference step");

  // map
  auto* mp = app.add_subcommand("map", "Classify every block of a large raster");
  std::string mp_raster, mp_ckpt, mp_remap, mp_out, mp_png;
  int mp_block = 256;
  mp->add_option("--raster", mp_raster, "RGB PNG raster")->required();
  mp->add_option("--checkpoint", mp_ckpt, "Checkpoint")->required();
  mp->add_option("--remap", mp_remap, "Remap table JSON (default: identity)");
  mp->add_option("--block", mp_block, "Block size in pixels");
  mp->add_option("--out", mp_out, "Block map JSON")->required();
  mp->add_option("--png", mp_png, "Color-indexed map raster");

  // score-map
  auto* sm = app.add_subcommand("score-map", "Score a block map against sparse annotations");
  std::string sm_map, sm_ann, sm_format = "json";
  sm->add_option("--map", sm_map, "Block map JSON")->required();
  sm->add_option("--annotations", sm_ann, "JSON list of {row, col, category}")->required();
  sm->add_option("--format", sm_format, "json or table")->check(CLI::IsMember({"json", "table"}));

  // export-features
  auto* ef = app.add_subcommand("export-features", "Write pooled and fused features of one split as CSV");
  std::string ef_ckpt, ef_data, ef_split = "test", ef_out;
  ef->add_option("--checkpoint", ef_ckpt, "Checkpoint")->required();
  ef->add_option("--data", ef_data, "Manifest or dataset directory")->required();
  ef->add_option("--split", ef_split, "train, val or test");
  ef->add_option("--out", ef_out, "CSV path")->required();

  // export-attention
  auto* ea = app.add_subcommand("export-attention", "Write ACF attention weights of samples as JSON lines");
  std::string ea_ckpt, ea_data, ea_split = "test", ea_sample, ea_out;
  int ea_limit = 0;
  ea->add_option("--checkpoint", ea_ckpt, "Checkpoint")->required();
  ea->add_option("--data", ea_data, "Manifest or dataset directory")->required();
  ea->add_option("--split", ea_split, "train, val or test");
  ea->add_option("--sample", ea_sample, "Only this sample id");
  ea->add_option("--limit", ea_limit, "At most this many samples (0 = all)");
  ea->add_option("--out", ea_out, "Output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  if (*gen) {
    if (!gen_config.empty()) apply_generator_config(read_key_values(gen_config), spec);
    if (pairs >= 0) spec.ambiguity_groups = paired_spec(spec.num_classes, pairs).ambiguity_groups;
    if (!groups.empty()) spec.ambiguity_groups = parse_groups(groups);
    if (!sizes.empty()) apply_generator_config({{"sizes", sizes}}, spec);
    apply_generator_config({{"prior", prior}, {"layout", layout}}, spec);
    auto ds = generate_dataset(spec, gen_out);
    if (!no_split) {
      ds.manifest = split_dataset(ds.manifest, {}, spec.seed);
      save_manifest(ds.manifest, fs::path(gen_out) / "manifest.jsonl");
    }
    std::cout << json{{"manifest", (fs::path(gen_out) / "manifest.jsonl").string()},
                      {"samples", ds.manifest.samples.size()},
                      {"bayes_center_accuracy", bayes_center_accuracy(spec)}}
                     .dump()
              << '\n';
  } else if (*spl) {
    std::vector<std::string> warnings;
    const auto m = split_dataset(load_manifest(manifest_path(spl_data)), ratios, spl_seed, &warnings);
    for (const auto& w : warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
    const fs::path out = spl_out.empty() ? manifest_path(spl_data) : fs::path(spl_out);
    save_manifest(m, out);
    std::cout << json{{"manifest", out.string()},
                      {"train", m.in_split(Split::train).size()},
                      {"val", m.in_split(Split::val).size()},
                      {"test", m.in_split(Split::test).size()}}
                     .dump()
              << '\n';
  } else if (*trn) {
    const auto m = load_manifest(manifest_path(trn_data));
    const TrainConfig cfg = trn_flags.resolve(&m);
    check_classes(m, cfg.model.num_classes);
    const auto train_set = prepare_split(m, Split::train, cfg.model.encoder);
    const auto val_set = prepare_split(m, Split::val, cfg.model.encoder);
    auto result = train(cfg, train_set, val_set);
    save_checkpoint(result.model, trn_out,
                    {{"train_config", cfg.to_json()},
                     {"best_step", result.log.best_step},
                     {"best_val_ba", result.log.best_val_ba}});
    if (!trn_log.empty()) result.log.write_jsonl(trn_log);
    std::cout << json{{"checkpoint", trn_out},
                      {"best_step", result.log.best_step},
                      {"best_val_ba", result.log.best_val_ba},
                      {"params_total", result.log.params_total},
                      {"params_trainable", result.log.params_trainable},
                      {"seconds_per_sample", result.log.seconds_per_sample}}
                     .dump()
              << '\n';
  } else if (*evl) {
    const auto ckpt = load_checkpoint(evl_ckpt);
    const auto m = load_data(evl_data, ckpt.model.config().num_classes);
    const auto samples = prepare_split(m, parse_split(evl_split), ckpt.model.config().encoder);
    const auto ev = evaluate(ckpt.model, samples, bucket_options(m));
    if (evl_format == "json") std::cout << ev.report.to_json().dump() << '\n';
    else std::cout << ev.report.table(class_names(m));
  } else if (*abl) {
    const auto m = load_manifest(manifest_path(abl_data));
    const TrainConfig base = abl_flags.resolve(&m);
    check_classes(m, base.model.num_classes);
    const auto train_set = prepare_split(m, Split::train, base.model.encoder);
    const auto val_set = prepare_split(m, Split::val, base.model.encoder);
    const auto test_set = prepare_split(m, Split::test, base.model.encoder);
    std::vector<std::pair<std::string, TrainConfig>> rows;
    auto row = [&](const std::string& name, auto&& edit) {
      TrainConfig c = base;
      edit(c.model);
      rows.emplace_back(name, c);
    };
    if (abl_rows == "ablation") {
      row("center-only", [](ModelConfig& mc) { mc.fusion = FusionKind::cat, mc.acf = mc.mls = mc.aft = false; });
      row("+acf", [](ModelConfig& mc) { mc.fusion = FusionKind::cat, mc.acf = true, mc.mls = mc.aft = false; });
      row("+acf+mls", [](ModelConfig& mc) { mc.fusion = FusionKind::cat, mc.acf = mc.mls = true, mc.aft = false; });
      row("+acf+mls+aft", [](ModelConfig& mc) { mc.fusion = FusionKind::cat, mc.acf = mc.mls = mc.aft = true; });
    } else {
      for (auto kind : {FusionKind::input_level, FusionKind::feature_level, FusionKind::decision_level, FusionKind::cat})
        row(to_string(kind), [kind](ModelConfig& mc) { mc.fusion = kind, mc.acf = mc.mls = mc.aft = true; });
    }
    json out = json::array();
    for (auto& [name, cfg] : rows) {
      std::vector<double> bas;
      for (auto seed : abl_seeds) {
        cfg.seed = cfg.model.seed = seed;
        const auto r = train(cfg, train_set, val_set);
        bas.push_back(evaluate(r.model, test_set).report.ba);
      }
      const double mean = std::accumulate(bas.begin(), bas.end(), 0.0) / static_cast<double>(bas.size());
      out.push_back({{"row", name}, {"ba", bas}, {"mean_ba", mean}});
      std::cerr << name << " mean BA " << mean << '\n';
    }
    std::cout << out.dump() << '\n';
  } else if (*gck) {
    TrainConfig cfg = gck_flags.resolve();
    Model model(cfg.model);
    randomize_trainable(model, 0.3, derive_seed(cfg.model.seed, 0x9c));
    GeneratorSpec s;
    s.num_classes = cfg.model.num_classes;
    s.clutter = 4;
    const auto sample = prepare_sample(render_sample(0, s, 7), cfg.model.encoder);
    const auto report = gradient_check(model, sample, 0, gck_opts);
    json flagged = json::array();
    for (const auto& e : report.flagged)
      flagged.push_back({{"name", e.name}, {"index", e.index}, {"analytic", e.analytic}, {"numeric", e.numeric},
                         {"rel_error", e.rel_error}});
    std::cout << json{{"coordinates", report.entries.size()},
                      {"max_rel_error", report.max_rel_error},
                      {"tolerance", gck_opts.tolerance},
                      {"passed", report.passed()},
                      {"flagged", flagged}}
                     .dump()
              << '\n';
    return report.passed() ? 0 : 1;
  } else if (*mp) {
    const auto ckpt = load_checkpoint(mp_ckpt);
    const int nc = ckpt.model.config().num_classes;
    RemapTable remap;
    if (mp_remap.empty()) {
      std::vector<std::string> names;
      for (int c = 0; c < nc; ++c) names.push_back("class_" + std::to_string(c));
      remap = RemapTable::identity(names);
    } else {
      remap = RemapTable::from_json(read_json(mp_remap));
    }
    const auto map = map_region(read_png(mp_raster), ckpt.model, remap, mp_block);
    write_text(mp_out, map.to_json().dump() + "\n");
    if (!mp_png.empty()) write_png(mp_png, render_block_map(map));
    std::cout << json{{"map", mp_out}, {"rows", map.rows}, {"cols", map.cols}}.dump() << '\n';
  } else if (*sm) {
    const auto map = BlockMap::from_json(read_json(sm_map));
    const auto report = score_map(map, annotations_from_json(read_json(sm_ann), map.targets));
    if (sm_format == "json") std::cout << report.to_json().dump() << '\n';
    else std::cout << report.table(map.targets);
  } else if (*ef) {
    const auto ckpt = load_checkpoint(ef_ckpt);
    const auto m = load_data(ef_data, ckpt.model.config().num_classes);
    const auto samples = prepare_split(m, parse_split(ef_split), ckpt.model.config().encoder);
    const auto rows = export_features(ckpt.model, samples);
    write_features_csv(rows, ef_out);
    std::cout << json{{"features", ef_out}, {"rows", rows.size()}}.dump() << '\n';
  } else if (*ea) {
    const auto ckpt = load_checkpoint(ea_ckpt);
    const auto m = load_data(ea_data, ckpt.model.config().num_classes);
    std::ostringstream os;
    int written = 0;
    for (const SampleRef* ref : m.in_split(parse_split(ea_split))) {
      if (!ea_sample.empty() && ref->id != ea_sample) continue;
      if (ea_limit > 0 && written >= ea_limit) break;
      const auto p = prepare_sample(load_sample(m, *ref), ckpt.model.config().encoder);
      os << export_attention(ckpt.model, p).to_json().dump() << '\n';
      ++written;
    }
    require(written > 0, ea_sample.empty() ? "no samples in split " + ea_split : "sample " + ea_sample + " not found");
    if (ea_out.empty()) std::cout << os.str();
    else write_text(ea_out, os.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << '\n';
    return 1;
  }
}
