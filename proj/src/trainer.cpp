#include "catnet/trainer.hpp"

#include "catnet/checkpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace catnet {

using nlohmann::json;

Adam::Adam(std::vector<Param*> params, const AdamConfig& config) : params_(std::move(params)), config_(config) {
  require(config.learning_rate > 0.0, "learning rate must be positive");
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        config_.learning_rate * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    quantize_to_float(p.value);
  }
}

void TrainConfig::validate() const {
  model.validate();
  require(adam.learning_rate > 0.0, "learning rate must be positive");
  require(batch_size >= 1, "batch size must be >= 1");
  require(steps >= 0 && epochs >= 0, "steps and epochs must be >= 0");
  require(eval_every >= 0, "eval_every must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"model", model.to_json()},
          {"optimizer", "adam"},
          {"learning_rate", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"batch_size", batch_size},
          {"steps", steps},
          {"epochs", epochs},
          {"eval_every", eval_every},
          {"seed", seed},
          {"profile", profile}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.model = ModelConfig::from_json(j.at("model"));
  c.adam.learning_rate = j.at("learning_rate");
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.batch_size = j.at("batch_size");
  c.steps = j.value("steps", c.steps);
  c.epochs = j.value("epochs", c.epochs);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.profile = j.value("profile", c.profile);
  return c;
}

namespace {

json step_json(const StepRecord& s) {
  json j{{"type", "step"}, {"step", s.step}, {"epoch", s.epoch}, {"loss_all", s.loss_all}};
  auto opt = [&](const char* k, const std::optional<double>& v) { j[k] = v ? json(*v) : json(nullptr); };
  opt("loss_c", s.loss_c);
  opt("loss_s", s.loss_s);
  opt("loss_g", s.loss_g);
  opt("loss_fused", s.loss_fused);
  return j;
}

void add_opt(std::optional<double>& acc, const std::optional<double>& v) {
  if (v) acc = acc.value_or(0.0) + *v;
}

}  // namespace

void RunLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write run log " + path.string());
  out << json{{"type", "run"},
              {"params_total", params_total},
              {"params_trainable", params_trainable},
              {"seconds_per_sample", seconds_per_sample},
              {"best_step", best_step},
              {"best_val_ba", best_val_ba}}
             .dump()
      << '\n';
  for (const auto& s : steps) out << step_json(s).dump() << '\n';
  for (const auto& e : evals)
    out << json{{"type", "eval"}, {"step", e.step}, {"epoch", e.epoch}, {"val", e.val.to_json()}}.dump() << '\n';
}

namespace {

using FeatureSet = std::vector<std::vector<BranchFeatures>>;

FeatureSet encode_all(const Model& model, const std::vector<PreparedSample>& samples) {
  FeatureSet out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.encode(s, nullptr));
  return out;
}

ModelOutput run_forward(const Model& model, const std::vector<PreparedSample>& samples, const FeatureSet* features,
                        std::size_t i, std::optional<int> label, ForwardCache* cache) {
  if (features) return model.forward_features((*features)[i], label, cache);
  return model.forward(samples[i], label, cache);
}

Evaluation evaluate_impl(const Model& model, const std::vector<PreparedSample>& samples, const FeatureSet* features,
                         const ReportOptions& options) {
  require(!samples.empty(), "cannot evaluate an empty split");
  Evaluation ev;
  ev.has_global_head = model.config().uses_acf();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].label >= 0 && samples[i].label < model.config().num_classes,
            "sample " + samples[i].id + " label outside the model's class range");
    const ModelOutput out = run_forward(model, samples, features, i, std::nullopt, nullptr);
    ev.predictions.push_back(out.predicted);
    ev.labels.push_back(samples[i].label);
    const Vec& rule = ev.has_global_head ? *out.heads.p_g : out.prediction;
    ev.rule_agreements += out.predicted == argmax(rule);
  }
  ev.report = make_report(ev.predictions, ev.labels, model.config().num_classes, options);
  return ev;
}

}  // namespace

Evaluation evaluate(const Model& model, const std::vector<PreparedSample>& samples, const ReportOptions& options) {
  return evaluate_impl(model, samples, nullptr, options);
}

TrainResult train(const TrainConfig& config, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& val_set, const StepCallback& on_step) {
  config.validate();
  require(!train_set.empty(), "training split is empty");
  require(!val_set.empty(), "validation split is empty");
  Model model(config.model);
  RunLog log;
  log.params_total = model.params().count();
  log.params_trainable = model.params().trainable_count();

  // Branch features never change when no adapter is trained.
  std::optional<FeatureSet> train_features, val_features;
  if (model.features_frozen()) {
    train_features = encode_all(model, train_set);
    val_features = encode_all(model, val_set);
  }
  const FeatureSet* tf = train_features ? &*train_features : nullptr;
  const FeatureSet* vf = val_features ? &*val_features : nullptr;

  const int n = static_cast<int>(train_set.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.epochs > 0 ? config.epochs * steps_per_epoch : config.steps;
  const int eval_every = config.eval_every > 0 ? config.eval_every : steps_per_epoch;

  Adam adam(model.trainable_parameters(), config.adam);
  std::vector<std::uint8_t> best = serialize_checkpoint(model);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int epoch = -1;
  int cursor = n;
  double train_seconds = 0.0;
  std::int64_t samples_seen = 0;

  for (int step = 1; step <= total_steps; ++step) {
    if (cursor >= n) {
      ++epoch;
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const int batch_end = std::min(n, cursor + config.batch_size);
    const int b = batch_end - cursor;
    const auto t0 = std::chrono::steady_clock::now();
    model.params().zero_grad();
    StepRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    for (int k = cursor; k < batch_end; ++k) {
      const int i = order[k];
      const int label = train_set[i].label;
      ForwardCache cache;
      const ModelOutput out = run_forward(model, train_set, tf, i, label, &cache);
      if (!std::isfinite(out.loss_all))
        throw Error("non-finite loss at step " + std::to_string(step) + " (sample " + train_set[i].id + ")");
      model.backward(cache, out, label, 1.0 / b);
      add_opt(rec.loss_c, out.heads.loss_c);
      add_opt(rec.loss_s, out.heads.loss_s);
      add_opt(rec.loss_g, out.heads.loss_g);
      add_opt(rec.loss_fused, out.loss_fused);
    }
    adam.step();
    train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    samples_seen += b;
    cursor = batch_end;
    for (auto* col : {&rec.loss_c, &rec.loss_s, &rec.loss_g, &rec.loss_fused})
      if (*col) **col /= b;
    rec.loss_all = 0.0;
    for (auto* col : {&rec.loss_c, &rec.loss_s, &rec.loss_g, &rec.loss_fused})
      if (*col) rec.loss_all += **col;
    log.steps.push_back(rec);
    if (on_step) on_step(rec);

    if (step % eval_every == 0 || step == total_steps) {
      const Evaluation ev = evaluate_impl(model, val_set, vf, {});
      log.evals.push_back({step, epoch, ev.report});
      if (ev.report.ba > log.best_val_ba) {
        log.best_val_ba = ev.report.ba;
        log.best_step = step;
        best = serialize_checkpoint(model);
      }
    }
  }
  log.seconds_per_sample = samples_seen > 0 ? train_seconds / static_cast<double>(samples_seen) : 0.0;
  return {deserialize_checkpoint(best).model, std::move(log)};
}

void randomize_trainable(Model& model, double std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Param* p : model.trainable_parameters()) fill_normal(p->value, std, rng);
}

GradCheckReport gradient_check(Model& model, const PreparedSample& sample, int label, const GradCheckOptions& options) {
  require(options.step > 0.0, "finite-difference step must be positive");
  auto loss = [&] { return model.forward(sample, label).loss_all; };
  model.params().zero_grad();
  ForwardCache cache;
  const ModelOutput out = model.forward(sample, label, &cache);
  model.backward(cache, out, label, 1.0);

  std::vector<std::pair<Param*, Eigen::Index>> coords;
  for (Param* p : model.trainable_parameters())
    for (Eigen::Index i = 0; i < p->size(); ++i) coords.emplace_back(p, i);
  if (options.max_coordinates > 0 && static_cast<std::size_t>(options.max_coordinates) < coords.size()) {
    const auto keep = static_cast<std::size_t>(std::max(options.max_coordinates, 200));
    if (keep < coords.size()) {
      std::mt19937_64 rng(options.seed);
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(keep);
    }
  }

  GradCheckReport report;
  for (auto [p, i] : coords) {
    double analytic = p->grad.data()[i];
    if (p->name == options.negate_parameter) analytic = -analytic;
    double& x = p->value.data()[i];
    const double saved = x;
    x = saved + options.step;
    const double up = loss();
    x = saved - options.step;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    GradCheckEntry e{p->name, i, analytic, numeric, std::abs(analytic - numeric) / denom};
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    if (e.rel_error >= options.tolerance) report.flagged.push_back(e);
    report.entries.push_back(std::move(e));
  }
  model.params().zero_grad();
  return report;
}

BranchScores branch_scores(const Model& model, const PreparedSample& sample, int label) {
  require(label >= 0 && label < model.config().num_classes, "label out of range");
  const ModelOutput out = model.forward(sample);
  BranchScores s;
  if (out.heads.p_c) s.center = (*out.heads.p_c)[label];
  if (out.heads.p_s) s.surrounding = (*out.heads.p_s)[label];
  if (out.heads.p_g) s.global = (*out.heads.p_g)[label];
  return s;
}

namespace {

std::vector<float> to_float(const Vec& v) {
  std::vector<float> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

std::vector<FeatureRow> export_features(const Model& model, const std::vector<PreparedSample>& samples) {
  require(model.config().uses_acf(), "feature export needs a CAT model with ACF");
  std::vector<FeatureRow> rows;
  for (const auto& s : samples) {
    const ModelOutput out = model.forward(s);
    FeatureRow r;
    r.id = s.id;
    r.label = s.label;
    r.center = to_float(out.features[0].pooled);
    r.surrounding_fused = to_float(out.fused->f_s_fused);
    r.global_fused = to_float(out.fused->f_g_fused);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_features_csv(const std::vector<FeatureRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  if (rows.empty()) return;
  out << "id,label";
  auto header = [&](char prefix, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out << ',' << prefix << '_' << i;
  };
  header('c', rows[0].center.size());
  header('s', rows[0].surrounding_fused.size());
  header('g', rows[0].global_fused.size());
  out << '\n';
  char buf[32];
  for (const auto& r : rows) {
    out << r.id << ',' << r.label;
    for (const auto* col : {&r.center, &r.surrounding_fused, &r.global_fused})
      for (float v : *col) {
        std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
        out << buf;
      }
    out << '\n';
  }
}

json AttentionExport::to_json() const { return {{"id", id}, {"surrounding", surrounding}, {"global", global}}; }

AttentionExport export_attention(const Model& model, const PreparedSample& sample) {
  require(model.config().uses_acf(), "attention export needs a CAT model with ACF");
  const ModelOutput out = model.forward(sample);
  AttentionExport e;
  e.id = sample.id;
  auto rows = [](const std::vector<Mat>& heads) {
    std::vector<std::vector<double>> r;
    for (const Mat& h : heads) {
      // Token queries give one row per query; report their mean.
      const RowVec mean = h.colwise().mean();
      r.emplace_back(mean.data(), mean.data() + mean.size());
    }
    return r;
  };
  e.surrounding = rows(out.attention_surrounding);
  e.global = rows(out.attention_global);
  return e;
}

std::vector<PreparedSample> prepare_split(const DatasetManifest& manifest, Split split, const EncoderConfig& config) {
  std::vector<PreparedSample> out;
  for (const SampleRef* ref : manifest.in_split(split)) out.push_back(prepare_sample(load_sample(manifest, *ref), config));
  return out;
}

PreparedData prepare_synthetic(const GeneratorSpec& spec, const EncoderConfig& config, std::uint64_t split_seed) {
  const auto labels = sample_labels(spec);
  DatasetManifest m;
  m.taxonomy = synthetic_taxonomy(spec);
  m.sizes = spec.image_sizes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SampleRef r;
    r.id = sample_id(i);
    r.label = labels[i];
    m.samples.push_back(r);
  }
  m = split_dataset(m, {}, split_seed);
  PreparedData d;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SceneSample s = render_sample(labels[i], spec, sample_noise_seed(spec, i));
    s.id = m.samples[i].id;
    auto p = prepare_sample(s, config);
    switch (m.samples[i].split) {
      case Split::train: d.train.push_back(std::move(p)); break;
      case Split::val: d.val.push_back(std::move(p)); break;
      case Split::test: d.test.push_back(std::move(p)); break;
      case Split::none: break;
    }
  }
  return d;
}

}  // namespace catnet
