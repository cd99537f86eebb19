// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.

#include <tubegcn/tubegcn.hpp>

#include "oracles.hpp"

#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

using namespace tubegcn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED " + what;
    }
  }
  void info(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Options {
  std::string cli;
  io::fs::path workdir = "acceptance_work";
  std::uint64_t iterations = 50000;  // training criteria only
  bool verbose = false;
};

Matrix random_features(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  return x;
}

// ---------------------------------------------------------------------------
// 1. Architecture

Outcome architecture(const Options&) {
  Outcome o;
  const auto t0 = Clock::now();
  const GcnModel m;
  o.check(m.layer_count() == 5, "5 layers");
  o.check(m.dims() == std::vector<int>({32, 64, 64, 64, 64, 1}), "dims 32-64-64-64-64-1");
  o.check(m.dropout_probability() == 0.5, "dropout 0.5");
  o.check(m.mode() == LayerMode::gcn, "default mode gcn");
  // Weights and biases only: the count matches the closed form, so no
  // normalization or other parameters are present.
  std::size_t weights = 0, biases = 0;
  for (std::size_t k = 0; k + 1 < m.dims().size(); ++k) {
    weights += static_cast<std::size_t>(m.dims()[k]) * m.dims()[k + 1];
    biases += static_cast<std::size_t>(m.dims()[k + 1]);
  }
  o.check(weights + biases == m.parameter_count(), "parameters = weights + biases");
  o.check(m.parameter_count() == 14657, "14,657 parameters");
  o.check(weights == 14400, "14,400 without biases");
  o.check(m.parameter_count() != 14567, "count differs from the published 14,567");
  const double t = seconds_since(t0);
  o.check(t < 1.0, "runtime < 1 s");
  o.info("parameters " + std::to_string(m.parameter_count()) + " (14,567 published), " + fmt("%.3f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness

Outcome gradients(const Options&) {
  Outcome o;
  const auto t0 = Clock::now();
  const TubeGraph g = build_topology(3, 24);
  double worst_rel = 0.0, worst_abs = 0.0;
  std::size_t failures = 0, reduced = 0, entries = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 7919);
    GcnModel model;
    model.init_params(seed);
    const Matrix x = random_features(g.vertex_count(), 32, rng);
    std::vector<double> r(g.vertex_count());
    for (double& v : r) v = rng.uniform(0.5, 2.5);
    model.zero_grad();
    model.forward(g.neighbors, x);
    model.backward(g.neighbors, r);
    const auto fd = oracle::finite_difference_gradient(model, g.neighbors, x, r, 1e-5);
    const auto c = oracle::compare_gradients(model.flat_gradients(), fd.gradient, 1e-4, 1e-8);
    worst_rel = std::max(worst_rel, c.worst_relative);
    worst_abs = std::max(worst_abs, c.worst_absolute);
    failures += c.failures;
    reduced += fd.reduced_step;
    entries += fd.gradient.size();
  }
  const double t = seconds_since(t0);
  o.check(failures == 0, std::to_string(failures) + " entries outside tolerance");
  o.check(t < 60.0, "runtime < 1 min");
  o.info("20 seeds x " + std::to_string(entries / 20) + " params, worst rel " + fmt("%.2e", worst_rel) + ", worst abs (tiny) " +
         fmt("%.2e", worst_abs) + ", kink-straddling steps reduced " + std::to_string(reduced) + ", " + fmt("%.1f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 3. Aggregator oracle

Adjacency random_graph(int n, Rng& rng) {
  std::vector<std::set<int>> sets(n);
  for (int v = 0; v < n; ++v) {
    const int extra = static_cast<int>(rng.index(5));
    for (int k = 0; k < extra; ++k) {
      const int u = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
      if (u == v) continue;
      sets[v].insert(u);
      sets[u].insert(v);
    }
  }
  Adjacency nb(n);
  for (int v = 0; v < n; ++v) nb[v].assign(sets[v].begin(), sets[v].end());
  return nb;
}

Outcome aggregator(const Options&) {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_mlp = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Adjacency torus = oracle::torus_adjacency(12, 24);
    Rng rng(seed);
    const Eigen::RowVectorXd row = random_features(1, 32, rng).row(0);
    Matrix x(static_cast<Eigen::Index>(torus.size()), 32);
    x.rowwise() = row;
    GcnModel gcn(LayerMode::gcn);
    gcn.init_params(seed);
    GcnModel mlp(LayerMode::mlp);
    mlp.set_flat_parameters(gcn.flat_parameters());
    worst_mlp = std::max(worst_mlp, (gcn.predict(torus, x) - mlp.predict(torus, x)).cwiseAbs().maxCoeff());
  }
  o.check(worst_mlp <= 1e-9, "GCN = MLP on uniform features within 1e-9");

  double worst_mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(100 + seed);
    const int n = 50 + static_cast<int>(rng.index(200));
    const Adjacency nb = random_graph(n, rng);
    const Matrix h = random_features(n, 16, rng) * 10.0;
    Matrix out;
    mean_aggregate(nb, h, out);
    worst_mean = std::max(worst_mean, (out - oracle::brute_force_mean(nb, h)).cwiseAbs().maxCoeff());
  }
  o.check(worst_mean <= 1e-12, "mean aggregation matches brute force within 1e-12");
  const double t = seconds_since(t0);
  o.check(t < 10.0, "runtime < 10 s");
  o.info("max |GCN-MLP| " + fmt("%.1e", worst_mlp) + ", max |mean - brute force| " + fmt("%.1e", worst_mean) + ", " + fmt("%.2f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Receptive field

Outcome receptive_field(const Options&) {
  Outcome o;
  const auto t0 = Clock::now();
  const TubeGraph g = build_topology(30, 24);
  int outside_changed = 0, max_changed_distance = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    GcnModel model;
    model.init_params(seed);
    const Matrix x = random_features(g.vertex_count(), 32, rng);
    const int source = g.vertex(10 + static_cast<int>(seed) * 3, static_cast<int>(rng.index(24)));
    Matrix xp = x;
    for (int c = 0; c < 32; ++c) xp(source, c) += rng.uniform(0.5, 1.0);
    const Vector a = model.predict(g.neighbors, x), b = model.predict(g.neighbors, xp);
    const auto dist = oracle::graph_distances(g.neighbors, source);
    for (int v = 0; v < g.vertex_count(); ++v) {
      const bool changed = a[v] != b[v];
      if (changed) max_changed_distance = std::max(max_changed_distance, dist[v]);
      if (dist[v] > 5 && changed) ++outside_changed;
    }
  }
  o.check(outside_changed == 0, std::to_string(outside_changed) + " outputs changed beyond 5 hops");
  o.check(max_changed_distance == 5, "some output changes at exactly 5 hops");
  const double t = seconds_since(t0);
  o.check(t < 10.0, "runtime < 10 s");
  o.info("farthest changed output at " + std::to_string(max_changed_distance) + " hops, " + fmt("%.2f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 7. Metric oracles

Centerline straight_centerline(int n_planes, const Vec3& dir = Vec3::UnitZ(), const Vec3& origin = Vec3::Zero()) {
  Centerline c;
  for (int i = 0; i < n_planes; ++i) c.points.push_back(origin + 0.5 * i * dir.normalized());
  return build_frames(c);
}

Mesh tube_mesh(const Centerline& cl, std::vector<double> radii, int n_angles = 24) {
  TubeGraph g = build_topology(static_cast<int>(cl.size()), n_angles);
  g.radii = std::move(radii);
  return {realize_positions(g, cl), g.triangles};
}

Outcome metric_oracles(const Options&) {
  Outcome o;
  const auto t0 = Clock::now();
  // Similar regular 24-gons: areas scale with r^2, so DSC = 2*1/(1+4).
  const double dice = cross_section_dice(std::vector<double>(24, 1.0), std::vector<double>(24, 2.0), 24);
  o.check(std::abs(dice - 0.4) <= 0.01, "concentric 24-gon DSC 0.4 +- 0.01");

  const Centerline cl = straight_centerline(200);
  const auto inner = tube_mesh(cl, std::vector<double>(200 * 24, 1.0));
  const auto outer = tube_mesh(cl, std::vector<double>(200 * 24, 1.3));
  const auto coax = surface_distances(inner, outer);
  o.check(std::abs(coax.msd - 0.3) <= 0.02 && std::abs(coax.hd - 0.3) <= 0.02, "coaxial MSD/HD 0.3 +- 0.02");

  const auto self = surface_distances(outer, outer);
  o.check(self.msd <= 1e-12 && self.hd <= 1e-12, "self distance (0, 0)");

  Rng rng(2024);
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    const int planes = 5 + static_cast<int>(rng.index(20));
    const Vec3 dir(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1));
    auto radii = [&](int n) {
      std::vector<double> r(static_cast<std::size_t>(n) * 24);
      for (double& v : r) v = rng.uniform(0.5, 2.0);
      return r;
    };
    const auto a = tube_mesh(straight_centerline(planes, dir), radii(planes));
    const int planes_b = 5 + static_cast<int>(rng.index(20));
    const Vec3 shift(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const auto b = tube_mesh(straight_centerline(planes_b, dir, shift), radii(planes_b));
    const auto d = surface_distances(a, b);
    if (!(d.hd >= d.msd && d.msd >= 0.0)) ++violations;
  }
  o.check(violations == 0, "HD >= MSD on 100 random pairs");
  const double t = seconds_since(t0);
  o.check(t < 60.0, "runtime < 1 min");
  o.info("DSC " + fmt("%.4f", dice) + ", coaxial MSD " + fmt("%.4f", coax.msd) + " HD " + fmt("%.4f", coax.hd) + ", self " +
         fmt("%.1e", std::max(self.msd, self.hd)) + ", HD<MSD pairs " + std::to_string(violations) + ", " + fmt("%.1f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism through the command line

int run_cli(const Options& opt, const std::string& args) {
  const std::string cmd = opt.cli + " " + args + (opt.verbose ? "" : " >/dev/null 2>&1");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const Options& opt) {
  Outcome o;
  const auto t0 = Clock::now();
  if (opt.cli.empty()) {
    o.check(false, "--cli path not given");
    return o;
  }
  const io::fs::path root = opt.workdir / "determinism";
  io::fs::remove_all(root);
  io::fs::create_directories(root);
  PhantomSpec spec = random_phantom_spec(11);
  io::write_json(root / "spec.json", phantom_io::to_json(spec));
  const io::json smoke{{"iterations", 500}, {"seed", 3}};
  io::write_json(root / "smoke.json", smoke);

  std::vector<std::pair<std::string, std::vector<std::string>>> artifacts;  // step -> relative files
  for (const std::string run : {"a", "b"}) {
    const io::fs::path d = root / run;
    const std::string ph = (d / "data" / "seg").string();
    o.check(run_cli(opt, "phantom --spec " + (root / "spec.json").string() + " --out " + ph) == 0, "phantom run " + run);
    o.check(run_cli(opt, "train --dataset " + (d / "data").string() + " --config " + (root / "smoke.json").string() + " --out " +
                             (d / "model.ckpt").string()) == 0,
            "train run " + run);
    o.check(run_cli(opt, "segment --model " + (d / "model.ckpt").string() + " --volume " + ph + "/volume.json --centerline " + ph +
                             "/centerline.json --out " + (d / "seg.obj").string()) == 0,
            "segment run " + run);
    o.check(run_cli(opt, "eval --pred " + (d / "seg.radii.json").string() + " --ref " + ph + "/groundtruth.json --centerline " + ph +
                             "/centerline.json --out " + (d / "report").string()) == 0,
            "eval run " + run);
  }
  const std::vector<std::pair<std::string, std::vector<std::string>>> steps{
      {"phantom", {"data/seg/volume.json", "data/seg/volume.raw", "data/seg/centerline.json", "data/seg/groundtruth.json"}},
      {"train", {"model.ckpt", "model.ckpt.loss.csv"}},
      {"segment", {"seg.obj", "seg.radii.json"}},
      {"eval", {"report.csv", "report.json"}}};
  std::size_t compared = 0;
  for (const auto& [step, files] : steps) {
    for (const auto& f : files) {
      const auto a = root / "a" / f, b = root / "b" / f;
      const bool same = io::fs::exists(a) && io::fs::exists(b) && io::read_text(a) == io::read_text(b);
      o.check(same, step + " output " + f + " byte-identical");
      ++compared;
    }
  }
  const std::size_t csv_rows = [&] {
    const std::string csv = io::fs::exists(root / "a" / "model.ckpt.loss.csv") ? io::read_text(root / "a" / "model.ckpt.loss.csv") : "";
    return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  }();
  o.check(csv_rows == 501, "500-row loss history");
  const double t = seconds_since(t0);
  o.check(t < 300.0, "runtime < 5 min");
  o.info(std::to_string(compared) + " artifacts compared across two runs, " + fmt("%.1f s", t));
  return o;
}

// ---------------------------------------------------------------------------
// 5, 6, 9. Training on phantoms

struct Split {
  std::vector<Sample> train, test;
};

const Split& phantom_split() {
  static const Split split = [] {
    Split s;
    RandomPhantomOptions opt;  // radii 1.0-2.5 mm, noise 20 HU, blur 0.3 mm
    for (int k = 0; k < 12; ++k) {
      const auto spec = random_phantom_spec(mix_seed(2020, static_cast<std::uint64_t>(k)), opt);
      s.train.push_back(prepare_sample("train" + std::to_string(k), "train" + std::to_string(k), generate_phantom(spec)));
    }
    // Held-out phantoms always carry calcifications next to the lumen.
    RandomPhantomOptions calcified = opt;
    calcified.force_calcification = true;
    for (int k = 0; k < 4; ++k) {
      const auto spec = random_phantom_spec(mix_seed(4040, static_cast<std::uint64_t>(k)), calcified);
      s.test.push_back(prepare_sample("test" + std::to_string(k), "test" + std::to_string(k), generate_phantom(spec)));
    }
    return s;
  }();
  return split;
}

struct TrainedModel {
  GcnModel model;
  MetricsReport report;
  double train_seconds = 0.0;
};

const TrainedModel& trained(const Options& opt, LayerMode mode, std::uint64_t seed) {
  static std::map<std::pair<int, std::uint64_t>, TrainedModel> cache;
  const auto key = std::make_pair(static_cast<int>(mode), seed);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const Split& split = phantom_split();
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.iterations = opt.iterations;
  TrainedModel tm{GcnModel(mode, cfg.dropout), {}, 0.0};
  tm.model.init_params(seed);
  const auto t0 = Clock::now();
  train(tm.model, cfg, split.train);
  tm.train_seconds = seconds_since(t0);
  tm.report = evaluate_samples(tm.model, split.test);
  if (opt.verbose) {
    const auto a = tm.report.aggregate();
    std::fprintf(stderr, "  trained %s seed %llu in %.0f s: DSC %.4f MSD %.4f HD %.4f roughness %.4f\n", to_string(mode).c_str(),
                 static_cast<unsigned long long>(seed), tm.train_seconds, a.dsc, a.msd_mm, a.hd_mm, a.roughness_mm);
  }
  return cache.emplace(key, std::move(tm)).first->second;
}

std::string iterations_note(const Options& opt) {
  return opt.iterations == 50000 ? "" : " (iterations overridden to " + std::to_string(opt.iterations) + ")";
}

Outcome phantom_recovery(const Options& opt) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto& tm = trained(opt, LayerMode::gcn, 0);
  const auto a = tm.report.aggregate();
  o.check(a.msd_mm <= 0.15, "MSD <= 0.15 mm");
  o.check(a.dsc >= 0.90, "mean DSC >= 0.90");
  o.check(tm.train_seconds <= 1800.0, "training <= 30 min");
  o.check(opt.iterations == 50000, "default 50,000 iterations");
  o.info("12 train / 4 test phantoms: DSC " + fmt("%.4f", a.dsc) + ", MSD " + fmt("%.4f mm", a.msd_mm) + ", HD " +
         fmt("%.4f mm", a.hd_mm) + ", training " + fmt("%.0f s", tm.train_seconds) + ", total " + fmt("%.0f s", seconds_since(t0)) +
         iterations_note(opt));
  return o;
}

Outcome ablation(const Options& opt) {
  Outcome o;
  const auto t0 = Clock::now();
  int dsc_wins = 0, msd_wins = 0, smooth_wins = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto g = trained(opt, LayerMode::gcn, seed).report.aggregate();
    const auto m = trained(opt, LayerMode::mlp, seed).report.aggregate();
    dsc_wins += g.dsc > m.dsc;
    msd_wins += g.msd_mm < m.msd_mm;
    smooth_wins += g.roughness_mm <= m.roughness_mm;
    rows += " | seed " + std::to_string(seed) + ": DSC " + fmt("%.4f", g.dsc) + "/" + fmt("%.4f", m.dsc) + " MSD " +
            fmt("%.4f", g.msd_mm) + "/" + fmt("%.4f", m.msd_mm) + " rough " + fmt("%.4f", g.roughness_mm) + "/" +
            fmt("%.4f", m.roughness_mm);
  }
  o.check(dsc_wins >= 2, "GCN DSC > MLP in a majority of replicates");
  o.check(msd_wins >= 2, "GCN MSD < MLP in a majority of replicates");
  o.check(smooth_wins >= 2, "GCN roughness <= MLP in a majority of replicates");
  const double t = seconds_since(t0);
  o.check(t <= 5400.0, "runtime <= 1.5 h");
  o.check(opt.iterations == 50000, "default 50,000 iterations");
  o.info("GCN/MLP wins: DSC " + std::to_string(dsc_wins) + "/3, MSD " + std::to_string(msd_wins) + "/3, roughness " +
         std::to_string(smooth_wins) + "/3" + rows + ", " + fmt("%.0f s", t) + iterations_note(opt));
  return o;
}

/// Distance along the ray origin + t*dir (t in [0, reach]) at which it first
/// enters the sphere, if it does.
std::optional<double> ray_sphere(const Vec3& origin, const Vec3& dir, const Calcification& c, double reach) {
  const Vec3 oc = origin - c.center;
  const double b = oc.dot(dir);
  const double disc = b * b - (oc.squaredNorm() - c.radius_mm * c.radius_mm);
  if (disc < 0) return std::nullopt;
  const double t = -b - std::sqrt(disc);
  if (t < 0 || t > reach) return std::nullopt;
  return t;
}

Outcome calcification(const Options& opt) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto& tm = trained(opt, LayerMode::gcn, 0);
  const double reach = (kDefaultRaySamples - 1) * kDefaultRayStepMm;
  std::size_t hits = 0, violations = 0;
  double worst = -1e9;
  for (const auto& s : phantom_split().test) {
    const auto pred = predict_radii(tm.model, s.graph);
    for (int v = 0; v < s.graph.vertex_count(); ++v) {
      const int i = s.graph.plane_of(v);
      const Vec3 dir = ray_direction(s.centerline.frames[i], s.graph.angle(v));
      bool hit = false;
      for (const auto& c : s.calcifications) hit = hit || ray_sphere(s.centerline.points[i], dir, c, reach).has_value();
      if (!hit) continue;
      ++hits;
      const double excess = pred[v] - s.graph.radii[v];
      worst = std::max(worst, excess);
      if (excess > 0.2) ++violations;
    }
  }
  o.check(hits > 0, "some rays point into a calcification");
  o.check(violations == 0, std::to_string(violations) + " of " + std::to_string(hits) + " calcified rays over-segmented by > 0.2 mm");
  o.check(opt.iterations == 50000, "default 50,000 iterations");
  o.info(std::to_string(hits) + " rays into 900 HU spheres, worst pred - truth " + fmt("%.4f mm", worst) + ", " +
         fmt("%.1f s", seconds_since(t0)) + iterations_note(opt));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options opt;
  std::string only;
  std::string workdir = opt.workdir.string();
  app.add_option("--only", only, "Comma-separated criterion numbers (default: all)");
  app.add_option("--cli", opt.cli, "Path to the tubegcn executable (criterion 8)");
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--iterations", opt.iterations, "Training iterations for criteria 5, 6, 9 (debugging only)");
  app.add_flag("--verbose", opt.verbose, "Progress on stderr");
  CLI11_PARSE(app, argc, argv);
  opt.workdir = workdir;
  io::fs::create_directories(opt.workdir);

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome(const Options&)>>>> criteria{
      {1, {"architecture fidelity", architecture}},
      {2, {"gradient correctness", gradients}},
      {3, {"aggregator oracle", aggregator}},
      {4, {"receptive field", receptive_field}},
      {5, {"phantom recovery", phantom_recovery}},
      {6, {"ablation ordering", ablation}},
      {7, {"metric oracles", metric_oracles}},
      {8, {"determinism", determinism}},
      {9, {"calcification exclusion", calcification}},
  };
  std::set<int> selected;
  if (!only.empty()) {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ',')) selected.insert(std::stoi(tok));
  }
  io::json summary = io::json::object();
  bool all = true;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = entry.second(opt);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, entry.first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    summary[std::to_string(id)] = {{"name", entry.first}, {"pass", o.pass}, {"detail", o.detail}};
  }
  std::string tag = only.empty() ? "all" : only;
  std::replace(tag.begin(), tag.end(), ',', '_');
  io::write_json(opt.workdir / ("summary_" + tag + ".json"), summary);
  return all ? 0 : 1;
}
