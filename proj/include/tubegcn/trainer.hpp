#pragma once

#include "core.hpp"
#include "dataset.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "network.hpp"

#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tubegcn {

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam on flat buffers. Moment buffers are sized on the first call.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st) {
  require(params.size() == grads.size(), "adam_step: parameter and gradient lengths differ");
  if (st.m.empty() && st.v.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  require(st.m.size() == params.size() && st.v.size() == params.size(), "adam_step: moment buffers do not match parameters");
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double m_hat = st.m[i] / c1;
    const double v_hat = st.v[i] / c2;
    params[i] -= st.lr * m_hat / (std::sqrt(v_hat) + st.eps);
  }
}

/// One Adam step over every model buffer, using the gradient accumulators
/// scaled by `grad_scale`.
inline void adam_step(GcnModel& model, AdamState& st, double grad_scale = 1.0) {
  std::vector<double> params = model.flat_parameters();
  std::vector<double> grads = model.flat_gradients();
  if (grad_scale != 1.0)
    for (auto& g : grads) g *= grad_scale;
  adam_step(params, grads, st);
  model.set_flat_parameters(params);
}

struct TrainConfig {
  std::uint64_t iterations = 50000;
  int accum_steps = 10;
  bool average_accumulated = false;  // sum by default
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 5000;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LayerMode mode = LayerMode::gcn;
  double dropout = kDefaultDropout;
  PipelineConfig pipeline;

  void validate() const {
    require(iterations > 0, "train config field 'iterations': must be > 0");
    require(accum_steps >= 1, "train config field 'accumSteps': must be >= 1");
    require(lr > 0.0, "train config field 'lr': must be > 0");
    require(dropout >= 0.0 && dropout < 1.0, "train config field 'dropout': must be in [0, 1)");
  }
};

namespace train_config_io {

inline io::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"accumSteps", c.accum_steps},
          {"averageAccumulated", c.average_accumulated},
          {"seed", c.seed},
          {"checkpointEvery", c.checkpoint_every},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"mode", to_string(c.mode)},
          {"dropout", c.dropout},
          {"resampleMm", c.pipeline.resample_mm},
          {"nAngles", c.pipeline.n_angles},
          {"nSamples", c.pipeline.n_samples},
          {"rayStepMm", c.pipeline.ray_step_mm}};
}

/// Unknown keys are rejected so that typos in --set do not pass silently.
inline TrainConfig from_json(const io::json& j) {
  require(j.is_object(), "train config must be a JSON object");
  static const std::set<std::string> known{"iterations", "accumSteps", "averageAccumulated", "seed", "checkpointEvery",
                                           "lr", "beta1", "beta2", "eps", "mode", "dropout", "resampleMm", "nAngles",
                                           "nSamples", "rayStepMm"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(known.count(it.key()) == 1, "train config: unknown field '" + it.key() + "'");
  const std::string ctx = "train config";
  TrainConfig c;
  c.iterations = io::get_field_or<std::uint64_t>(j, "iterations", c.iterations, ctx);
  c.accum_steps = io::get_field_or<int>(j, "accumSteps", c.accum_steps, ctx);
  c.average_accumulated = io::get_field_or<bool>(j, "averageAccumulated", c.average_accumulated, ctx);
  c.seed = io::get_field_or<std::uint64_t>(j, "seed", c.seed, ctx);
  c.checkpoint_every = io::get_field_or<std::uint64_t>(j, "checkpointEvery", c.checkpoint_every, ctx);
  c.lr = io::get_field_or<double>(j, "lr", c.lr, ctx);
  c.beta1 = io::get_field_or<double>(j, "beta1", c.beta1, ctx);
  c.beta2 = io::get_field_or<double>(j, "beta2", c.beta2, ctx);
  c.eps = io::get_field_or<double>(j, "eps", c.eps, ctx);
  c.mode = parse_layer_mode(io::get_field_or<std::string>(j, "mode", to_string(c.mode), ctx));
  c.dropout = io::get_field_or<double>(j, "dropout", c.dropout, ctx);
  c.pipeline.resample_mm = io::get_field_or<double>(j, "resampleMm", c.pipeline.resample_mm, ctx);
  c.pipeline.n_angles = io::get_field_or<int>(j, "nAngles", c.pipeline.n_angles, ctx);
  c.pipeline.n_samples = io::get_field_or<int>(j, "nSamples", c.pipeline.n_samples, ctx);
  c.pipeline.ray_step_mm = io::get_field_or<double>(j, "rayStepMm", c.pipeline.ray_step_mm, ctx);
  c.validate();
  return c;
}

}  // namespace train_config_io

struct LossRecord {
  std::uint64_t iteration;  // 1-based
  std::string segment_id;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> history;
  std::vector<std::uint64_t> update_iterations;  // iterations after which Adam stepped
  std::uint64_t gradient_evaluations = 0;
};

/// Thrown when a loss turns non-finite; carries the parameters as of the last
/// completed optimizer update.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(std::uint64_t iteration, std::string segment, std::vector<double> last_good)
      : NumericalError("non-finite loss at iteration " + std::to_string(iteration) + " on segment '" + segment + "'"),
        iteration_(iteration),
        last_good_(std::move(last_good)) {}
  std::uint64_t iteration() const { return iteration_; }
  const std::vector<double>& last_good_parameters() const { return last_good_; }

 private:
  std::uint64_t iteration_;
  std::vector<double> last_good_;
};

struct TrainHooks {
  /// Called with (iteration, model) every checkpoint_every iterations, right after an update.
  std::function<void(std::uint64_t, const GcnModel&)> on_checkpoint;
  /// Called with the segment id whenever its features or radii are read.
  std::function<void(const std::string&)> on_access;
  std::function<void(std::uint64_t, double)> on_progress;
};

inline TrainConfig default_train_config() { return TrainConfig{}; }

/// Each iteration samples one segment uniformly with replacement, runs a
/// training-mode forward and backward into the accumulators; every
/// accum_steps iterations one Adam update is applied and the accumulators
/// are zeroed.
inline TrainResult train(GcnModel& model, const TrainConfig& cfg, std::span<const Sample> dataset, const TrainHooks& hooks = {}) {
  cfg.validate();
  require(!dataset.empty(), "training dataset is empty");
  for (const auto& s : dataset) {
    require(s.graph.has_features(), "segment '" + s.id + "' has no features");
    require(s.graph.has_radii(), "segment '" + s.id + "' has no reference radii");
    require(s.graph.features.cols() == model.input_dim(), "segment '" + s.id + "' feature length does not match the model");
  }
  AdamState adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.eps;

  Rng sampler(mix_seed(cfg.seed, 0x5a3));
  model.reseed_dropout(mix_seed(cfg.seed, 0xd0));
  model.training = true;
  model.zero_grad();

  TrainResult res;
  res.history.reserve(cfg.iterations);
  std::vector<double> last_good = model.flat_parameters();
  const double scale = cfg.average_accumulated ? 1.0 / cfg.accum_steps : 1.0;
  for (std::uint64_t it = 1; it <= cfg.iterations; ++it) {
    const Sample& s = dataset[sampler.index(dataset.size())];
    if (hooks.on_access) hooks.on_access(s.id);
    model.forward(s.graph);
    const double loss = model.backward(s.graph, s.graph.radii);
    ++res.gradient_evaluations;
    if (!std::isfinite(loss)) {
      model.training = false;
      throw TrainingDiverged(it, s.id, last_good);
    }
    res.history.push_back({it, s.id, loss});
    if (hooks.on_progress) hooks.on_progress(it, loss);
    if (it % static_cast<std::uint64_t>(cfg.accum_steps) == 0) {
      adam_step(model, adam, scale);
      model.zero_grad();
      res.update_iterations.push_back(it);
      last_good = model.flat_parameters();
      if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
        model.training = false;
        hooks.on_checkpoint(it, model);
        model.training = true;
      }
    }
  }
  // Iterations past the last full accumulation window are not applied.
  model.zero_grad();
  model.training = false;
  return res;
}

// ---------------------------------------------------------------------------
// Leave-one-patient-out cross-validation

struct PatientSegments {
  std::string patient;
  std::vector<Sample> segments;
};

struct FoldResult {
  std::string held_out;
  std::uint64_t seed = 0;
  MetricsReport report;
  std::vector<std::string> trained_on;  // segment ids in the fold's training set
  std::vector<std::string> tested_on;
};

/// Records every (phase, segment id) access during cross-validation.
struct AccessAudit {
  struct Event {
    std::size_t fold;
    std::string phase;  // "train" | "test"
    std::string segment;
  };
  std::vector<Event> events;
};

inline std::vector<double> predicted_radii(const GcnModel& model, const Sample& s) { return predict_radii(model, s.graph); }

inline MetricsReport evaluate_samples(const GcnModel& model, std::span<const Sample> samples,
                                      const std::function<void(const std::string&)>& on_access = {}) {
  MetricsReport rep;
  for (const auto& s : samples) {
    if (on_access) on_access(s.id);
    require(s.graph.has_radii(), "segment '" + s.id + "' has no reference radii");
    const auto pred = predict_radii(model, s.graph);
    rep.per_segment.push_back(evaluate_segment(s.id, s.centerline, s.graph, pred, s.graph.radii, s.diseased ? "diseased" : "healthy"));
  }
  return rep;
}

/// For each patient: fresh model (seed = master ^ fold index), trained on the
/// other patients' segments, evaluated on the held-out patient's segments.
inline std::vector<FoldResult> cross_validate(const std::vector<PatientSegments>& patients, const TrainConfig& cfg,
                                              AccessAudit* audit = nullptr) {
  require(patients.size() >= 2, "cross-validation needs at least 2 patients");
  for (const auto& p : patients) require(!p.segments.empty(), "patient '" + p.patient + "' has no segments");
  std::vector<FoldResult> folds;
  for (std::size_t f = 0; f < patients.size(); ++f) {
    FoldResult fold;
    fold.held_out = patients[f].patient;
    fold.seed = cfg.seed ^ static_cast<std::uint64_t>(f);
    std::vector<Sample> train_set;
    for (std::size_t p = 0; p < patients.size(); ++p) {
      if (p == f) continue;
      for (const auto& s : patients[p].segments) {
        train_set.push_back(s);
        fold.trained_on.push_back(s.id);
      }
    }
    GcnModel model(cfg.mode, cfg.dropout);
    model.init_params(fold.seed);
    TrainConfig fcfg = cfg;
    fcfg.seed = fold.seed;
    TrainHooks hooks;
    if (audit) hooks.on_access = [&](const std::string& id) { audit->events.push_back({f, "train", id}); };
    train(model, fcfg, train_set, hooks);
    std::function<void(const std::string&)> test_access;
    if (audit) test_access = [&](const std::string& id) { audit->events.push_back({f, "test", id}); };
    fold.report = evaluate_samples(model, patients[f].segments, test_access);
    for (const auto& s : patients[f].segments) fold.tested_on.push_back(s.id);
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace tubegcn
