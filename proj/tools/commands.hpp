#pragma once

#include <tubegcn/tubegcn.hpp>

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace tubegcn::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string file_hash(const io::fs::path& p) { return sha256_hex(io::read_text(p)); }

/// Inputs and outputs of one command with content hashes, plus seeds and timings.
class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    j_ = {{"tool", "tubegcn"}, {"version", kToolVersion}, {"command", std::move(command)},
          {"inputs", io::json::array()}, {"outputs", io::json::array()}, {"seeds", io::json::object()}};
  }

  void config(const std::string& path, const io::json& resolved) {
    j_["configPath"] = path;
    j_["config"] = resolved;
  }
  void seed(const std::string& name, std::uint64_t value) { j_["seeds"][name] = value; }
  void input(const io::fs::path& p) { j_["inputs"].push_back({{"path", p.string()}, {"sha256", file_hash(p)}}); }
  void output(const io::fs::path& p) { j_["outputs"].push_back({{"path", p.string()}, {"sha256", file_hash(p)}}); }
  void note(const std::string& key, const io::json& value) { j_[key] = value; }

  void write(const io::fs::path& path) {
    j_["wallClockSeconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_json(path, j_);
  }

 private:
  io::json j_;
  std::chrono::steady_clock::time_point start_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// phantom

struct PhantomArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_phantom(const PhantomArgs& a) {
  PhantomSpec spec = phantom_io::spec_from_json(io::read_json(a.spec));
  if (a.seed) spec.seed = *a.seed;
  const Phantom ph = generate_phantom(spec);
  Manifest m("phantom");
  m.config(a.spec, phantom_io::to_json(spec));
  m.seed("noise", spec.seed);
  m.input(a.spec);
  for (const auto& f : segment_files::write_phantom(a.out, ph)) m.output(f);
  m.write(io::fs::path(a.out) / segment_files::kManifest);
  return 0;
}

// ---------------------------------------------------------------------------
// make-dataset

struct MakeDatasetArgs {
  std::string out;
  int n_train = 12;
  int n_test = 4;
  std::uint64_t seed = 0;
  RandomPhantomOptions options;
};

/// Random phantoms, one patient each, listed with their split in dataset.json.
inline int cmd_make_dataset(const MakeDatasetArgs& a) {
  require(a.n_train >= 0 && a.n_test >= 0 && a.n_train + a.n_test > 0, "make-dataset: need at least one phantom");
  const io::fs::path root(a.out);
  io::fs::create_directories(root);
  Manifest m("make-dataset");
  m.seed("master", a.seed);
  io::json segments = io::json::array();
  const int total = a.n_train + a.n_test;
  for (int k = 0; k < total; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "phantom%03d", k);
    const std::uint64_t seed = mix_seed(a.seed, static_cast<std::uint64_t>(k));
    const PhantomSpec spec = random_phantom_spec(seed, a.options);
    for (const auto& f : segment_files::write_phantom(root / id, generate_phantom(spec))) m.output(f);
    segments.push_back({{"id", id}, {"patient", id}, {"dir", id}, {"split", k < a.n_train ? "train" : "test"},
                        {"seed", seed}, {"spec", phantom_io::to_json(spec)}});
  }
  io::write_json(root / segment_files::kIndex, {{"segments", segments}});
  m.output(root / segment_files::kIndex);
  m.write(root / segment_files::kManifest);
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainConfigArgs {
  std::string config;                  // optional JSON file
  std::vector<std::string> overrides;  // key=value
  std::optional<std::string> mode;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> seed;
};

/// Value text is parsed as JSON when possible, otherwise taken as a string.
inline io::json parse_override_value(const std::string& text) {
  try {
    return io::json::parse(text);
  } catch (const io::json::parse_error&) {
    return text;
  }
}

/// Defaults, then the config file, then --set overrides, then dedicated flags.
inline TrainConfig resolve_train_config(const TrainConfigArgs& a) {
  io::json j = train_config_io::to_json(TrainConfig{});
  if (!a.config.empty()) {
    const io::json file = io::read_json(a.config);
    require(file.is_object(), a.config + ": train config must be a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) j[it.key()] = it.value();
  }
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "--set expects key=value, got '" + kv + "'");
    j[kv.substr(0, eq)] = parse_override_value(kv.substr(eq + 1));
  }
  if (a.mode) j["mode"] = *a.mode;
  if (a.iterations) j["iterations"] = *a.iterations;
  if (a.seed) j["seed"] = *a.seed;
  try {
    return train_config_io::from_json(j);
  } catch (const io::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

/// Segments of the dataset whose split is `split`; an empty split selects
/// every segment not marked "test".
inline std::vector<segment_files::IndexEntry> select_segments(const io::fs::path& root, const std::string& split) {
  std::vector<segment_files::IndexEntry> out;
  for (const auto& e : segment_files::list_segments(root))
    if (split.empty() ? e.split != "test" : e.split == split) out.push_back(e);
  require(!out.empty(), "no segments in " + root.string() + (split.empty() ? "" : " with split '" + split + "'"));
  return out;
}

inline std::vector<Sample> load_segments(const io::fs::path& root, const std::vector<segment_files::IndexEntry>& entries,
                                         bool need_truth, const PipelineConfig& pipeline, Manifest* m = nullptr) {
  std::vector<Sample> out;
  for (const auto& e : entries) {
    const io::fs::path dir = root / e.dir;
    out.push_back(segment_files::load_sample(dir, e.id, e.patient, need_truth, pipeline));
    if (m) {
      for (const char* f : {segment_files::kVolume, segment_files::kVolumeRaw, segment_files::kCenterline, segment_files::kTruth})
        if (io::fs::exists(dir / f)) m->input(dir / f);
    }
  }
  return out;
}

inline io::json checkpoint_extra(const TrainConfig& cfg, bool complete) {
  return {{"iterations", cfg.iterations}, {"lr", cfg.lr}, {"complete", complete}, {"config", train_config_io::to_json(cfg)}};
}

inline std::string loss_csv(const std::vector<LossRecord>& history) {
  std::string out = "iteration,segmentId,loss\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.loss);
    out += std::to_string(r.iteration) + "," + r.segment_id + buf;
  }
  return out;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string loss_csv;  // default: <out>.loss.csv
  std::string split;
  TrainConfigArgs config;
};

inline int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_train_config(a.config);
  const io::fs::path out(a.out);
  const io::fs::path csv_path = a.loss_csv.empty() ? io::fs::path(a.out + ".loss.csv") : io::fs::path(a.loss_csv);
  if (out.has_parent_path()) io::fs::create_directories(out.parent_path());
  Manifest m("train");
  m.config(a.config.config, train_config_io::to_json(cfg));
  m.seed("master", cfg.seed);
  const auto samples = load_segments(a.dataset, select_segments(a.dataset, a.split), true, cfg.pipeline, &m);
  GcnModel model(cfg.mode, cfg.dropout);
  model.init_params(cfg.seed);

  std::vector<LossRecord> history;
  std::string current;
  TrainHooks hooks;
  hooks.on_access = [&](const std::string& id) { current = id; };
  hooks.on_progress = [&](std::uint64_t it, double loss) { history.push_back({it, current, loss}); };
  hooks.on_checkpoint = [&](std::uint64_t it, const GcnModel& mdl) {
    checkpoint::write(mdl, checkpoint::make_header(mdl, it, checkpoint_extra(cfg, false)), out);
  };
  const auto t0 = std::chrono::steady_clock::now();
  int code = 0;
  try {
    train(model, cfg, samples, hooks);
    checkpoint::write(model, checkpoint::make_header(model, cfg.iterations, checkpoint_extra(cfg, true)), out);
  } catch (const TrainingDiverged& e) {
    model.set_flat_parameters(e.last_good_parameters());
    const std::uint64_t accum = static_cast<std::uint64_t>(cfg.accum_steps);
    const std::uint64_t last_update = (e.iteration() - 1) / accum * accum;
    checkpoint::write(model, checkpoint::make_header(model, last_update, checkpoint_extra(cfg, false)), out);
    std::cerr << "tubegcn train: " << e.what() << "; kept the checkpoint from iteration " << last_update << "\n";
    m.note("diverged", {{"iteration", e.iteration()}, {"message", e.what()}});
    code = 3;
  }
  m.note("trainSeconds", seconds_since(t0));
  io::write_text(csv_path, loss_csv(history));
  m.output(out);
  m.output(csv_path);
  m.write(a.out + ".manifest.json");
  return code;
}

// ---------------------------------------------------------------------------
// segment

inline PipelineConfig pipeline_from_header(const io::json& header) {
  if (header.contains("config")) return train_config_io::from_json(header.at("config")).pipeline;
  return {};
}

inline io::json radii_json(const TubeGraph& g) {
  return {{"nPlanes", g.n_planes}, {"nAngles", g.n_angles}, {"radii", g.radii}};
}

struct RadiiFile {
  int n_planes = 0;
  int n_angles = 0;
  std::vector<double> radii;
};

inline RadiiFile read_radii(const io::fs::path& p) {
  const io::json j = io::read_json(p);
  const std::string ctx = p.string();
  RadiiFile r{io::get_field<int>(j, "nPlanes", ctx), io::get_field<int>(j, "nAngles", ctx),
              io::get_field<std::vector<double>>(j, "radii", ctx)};
  require(r.n_planes >= 2 && r.n_angles >= 3, ctx + ": need nPlanes >= 2 and nAngles >= 3");
  require(r.radii.size() == static_cast<std::size_t>(r.n_planes) * r.n_angles,
          ctx + ": radii length " + std::to_string(r.radii.size()) + " != nPlanes * nAngles");
  return r;
}

struct SegmentArgs {
  std::string model;
  std::string volume;
  std::string centerline;
  std::string out;    // OBJ
  std::string radii;  // default: <out without extension>.radii.json
};

inline int cmd_segment(const SegmentArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto loaded = checkpoint::read(a.model);
  const PipelineConfig pipeline = pipeline_from_header(loaded.header);
  const Volume vol = volume_io::read(a.volume);
  const Centerline cl = prepare_centerline(centerline_io::read(a.centerline), pipeline);
  for (std::size_t i = 0; i < cl.size(); ++i)
    require(vol.contains(cl.points[i]), "centerline point " + std::to_string(i) + " lies outside the volume bounds");
  TubeGraph g = build_graph(cl, pipeline.n_angles);
  extract_features(g, cl, vol, pipeline.n_samples, pipeline.ray_step_mm);
  g.radii = predict_radii(loaded.model, g);
  const io::fs::path obj(a.out);
  if (obj.has_parent_path()) io::fs::create_directories(obj.parent_path());
  io::write_text(obj, export_obj(g, realize_positions(g, cl)));
  io::fs::path radii_path = a.radii.empty() ? io::fs::path(obj).replace_extension(".radii.json") : io::fs::path(a.radii);
  io::write_json(radii_path, radii_json(g));
  std::fprintf(stderr, "tubegcn segment: %d planes, %d vertices in %.3f s\n", g.n_planes, g.vertex_count(), seconds_since(t0));
  return 0;
}

// ---------------------------------------------------------------------------
// eval

/// Reference radii from either a radii file or a ground-truth table.
inline RadiiFile reference_for(const io::fs::path& p, const Centerline& cl, int n_angles) {
  const io::json j = io::read_json(p);
  if (j.contains("radii")) return read_radii(p);
  const GroundTruth gt = phantom_io::truth_from_json(j, p.string());
  return {static_cast<int>(cl.size()), n_angles, reference_radii(cl, gt, n_angles)};
}

struct EvalArgs {
  // single segment
  std::string pred;
  std::string ref;
  std::string centerline;
  std::string id = "segment";
  // or a model over a dataset split
  std::string model;
  std::string dataset;
  std::string split = "test";
  std::string out;  // writes <out>.csv and <out>.json
  bool plane_dsc = false;
};

inline void write_report(const MetricsReport& rep, const std::string& out, bool plane_dsc) {
  const io::fs::path base(out);
  if (base.has_parent_path()) io::fs::create_directories(base.parent_path());
  io::write_text(out + ".csv", metrics_io::to_csv(rep));
  io::write_json(out + ".json", metrics_io::to_json(rep, plane_dsc));
}

inline int cmd_eval(const EvalArgs& a) {
  MetricsReport rep;
  if (!a.model.empty()) {
    require(!a.dataset.empty(), "eval --model needs --dataset");
    const auto loaded = checkpoint::read(a.model);
    const auto samples = load_segments(a.dataset, select_segments(a.dataset, a.split), true, pipeline_from_header(loaded.header));
    rep = evaluate_samples(loaded.model, samples);
  } else {
    require(!a.pred.empty() && !a.ref.empty() && !a.centerline.empty(), "eval needs --pred, --ref and --centerline (or --model and --dataset)");
    const RadiiFile pred = read_radii(a.pred);
    PipelineConfig pipeline;
    pipeline.n_angles = pred.n_angles;
    const Centerline cl = prepare_centerline(centerline_io::read(a.centerline), pipeline);
    const RadiiFile ref = reference_for(a.ref, cl, pred.n_angles);
    require(pred.n_planes == ref.n_planes, "plane count mismatch: prediction has " + std::to_string(pred.n_planes) +
                                               " planes, reference has " + std::to_string(ref.n_planes));
    require(pred.n_angles == ref.n_angles, "angle count mismatch: prediction has " + std::to_string(pred.n_angles) +
                                               " angles, reference has " + std::to_string(ref.n_angles));
    require(pred.n_planes == static_cast<int>(cl.size()), "plane count mismatch: prediction has " + std::to_string(pred.n_planes) +
                                                              " planes, resampled centerline has " + std::to_string(cl.size()));
    const TubeGraph topo = build_topology(pred.n_planes, pred.n_angles);
    rep.per_segment.push_back(evaluate_segment(a.id, cl, topo, pred.radii, ref.radii));
  }
  write_report(rep, a.out, a.plane_dsc);
  return 0;
}

// ---------------------------------------------------------------------------
// export-mesh

struct ExportMeshArgs {
  std::string centerline;
  std::string radii;  // radii file or ground-truth table
  int n_angles = kDefaultAngles;
  std::string out;
};

inline int cmd_export_mesh(const ExportMeshArgs& a) {
  PipelineConfig pipeline;
  pipeline.n_angles = a.n_angles;
  const io::json j = io::read_json(a.radii);
  if (j.contains("nAngles")) pipeline.n_angles = io::get_field<int>(j, "nAngles", a.radii);
  const Centerline cl = prepare_centerline(centerline_io::read(a.centerline), pipeline);
  const RadiiFile r = reference_for(a.radii, cl, pipeline.n_angles);
  require(r.n_planes == static_cast<int>(cl.size()), "plane count mismatch: radii have " + std::to_string(r.n_planes) +
                                                         " planes, resampled centerline has " + std::to_string(cl.size()));
  TubeGraph g = build_topology(r.n_planes, r.n_angles);
  g.radii = r.radii;
  const io::fs::path obj(a.out);
  if (obj.has_parent_path()) io::fs::create_directories(obj.parent_path());
  io::write_text(obj, export_obj(g, realize_positions(g, cl)));
  return 0;
}

// ---------------------------------------------------------------------------
// cross-validate

struct CrossValidateArgs {
  std::string dataset;
  std::string out;
  TrainConfigArgs config;
};

/// Leave-one-patient-out over every segment of the dataset, grouped by patient.
inline int cmd_cross_validate(const CrossValidateArgs& a) {
  const TrainConfig cfg = resolve_train_config(a.config);
  const auto entries = segment_files::list_segments(a.dataset);
  require(!entries.empty(), "no segments in " + a.dataset);
  const auto samples = load_segments(a.dataset, entries, true, cfg.pipeline);
  std::vector<PatientSegments> patients;
  for (const auto& s : samples) {
    auto it = std::find_if(patients.begin(), patients.end(), [&](const PatientSegments& p) { return p.patient == s.patient; });
    if (it == patients.end()) {
      patients.push_back({s.patient, {}});
      it = patients.end() - 1;
    }
    it->segments.push_back(s);
  }
  const auto folds = cross_validate(patients, cfg);
  MetricsReport all;
  io::json fold_json = io::json::array();
  for (const auto& f : folds) {
    all.append(f.report);
    fold_json.push_back({{"heldOut", f.held_out}, {"seed", f.seed}, {"aggregate", metrics_io::aggregate_json(f.report.aggregate())}});
  }
  write_report(all, a.out, false);
  io::write_json(a.out + ".folds.json", {{"folds", fold_json}});
  return 0;
}

}  // namespace tubegcn::cli
