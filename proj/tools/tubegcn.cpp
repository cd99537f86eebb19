#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace tubegcn;

namespace {

void add_train_config_options(CLI::App* sub, cli::TrainConfigArgs& c) {
  sub->add_option("--config", c.config, "Train config JSON (defaults reproduce the standard protocol)");
  sub->add_option("--set", c.overrides, "Override a config field, key=value (repeatable)");
  sub->add_option("--mode", c.mode, "Layer type")->check(CLI::IsMember({"gcn", "mlp"}));
  sub->add_option("--iterations", c.iterations, "Number of training iterations");
  sub->add_option("--seed", c.seed, "Master seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube mesh segmentation with graph convolutional networks"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);

  cli::PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom", "Render a synthetic vessel phantom");
  ph->add_option("--spec", phantom.spec, "Phantom spec JSON")->required()->check(CLI::ExistingFile);
  ph->add_option("--out", phantom.out, "Output directory")->required();
  ph->add_option("--seed", phantom.seed, "Noise seed (overrides the spec)");

  cli::MakeDatasetArgs md;
  auto* mk = app.add_subcommand("make-dataset", "Generate a train/test split of random phantoms");
  mk->add_option("--out", md.out, "Output directory")->required();
  mk->add_option("--train", md.n_train, "Number of training phantoms")->capture_default_str();
  mk->add_option("--test", md.n_test, "Number of test phantoms")->capture_default_str();
  mk->add_option("--seed", md.seed, "Master seed")->capture_default_str();
  mk->add_option("--noise-hu", md.options.noise_sigma_hu, "Noise standard deviation in HU")->capture_default_str();
  mk->add_option("--blur-mm", md.options.blur_sigma_mm, "Gaussian blur sigma in mm")->capture_default_str();
  mk->add_option("--stenosis-probability", md.options.stenosis_probability)->capture_default_str();
  mk->add_option("--calcification-probability", md.options.calcification_probability)->capture_default_str();

  cli::TrainArgs tr;
  auto* trc = app.add_subcommand("train", "Train a model on a dataset directory");
  trc->add_option("--dataset", tr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trc->add_option("--out", tr.out, "Checkpoint path")->required();
  trc->add_option("--loss-csv", tr.loss_csv, "Loss history CSV (default <out>.loss.csv)");
  trc->add_option("--split", tr.split, "Use only segments of this split (default: all but 'test')");
  add_train_config_options(trc, tr.config);

  cli::SegmentArgs sg;
  auto* sgc = app.add_subcommand("segment", "Predict a tube mesh for one centerline");
  sgc->add_option("--model", sg.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  sgc->add_option("--volume", sg.volume, "Volume (.json sidecar or .mhd)")->required()->check(CLI::ExistingFile);
  sgc->add_option("--centerline", sg.centerline, "Centerline JSON")->required()->check(CLI::ExistingFile);
  sgc->add_option("--out", sg.out, "Output OBJ")->required();
  sgc->add_option("--radii", sg.radii, "Output radii JSON (default <out>.radii.json)");

  cli::EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Compare predicted and reference tubes");
  evc->add_option("--pred", ev.pred, "Predicted radii JSON");
  evc->add_option("--ref", ev.ref, "Reference radii JSON or ground-truth JSON");
  evc->add_option("--centerline", ev.centerline, "Centerline JSON");
  evc->add_option("--id", ev.id, "Segment id for the report")->capture_default_str();
  evc->add_option("--model", ev.model, "Checkpoint to evaluate on a dataset");
  evc->add_option("--dataset", ev.dataset, "Dataset directory");
  evc->add_option("--split", ev.split, "Dataset split")->capture_default_str();
  evc->add_option("--out", ev.out, "Report prefix; writes <out>.csv and <out>.json")->required();
  evc->add_flag("--plane-dsc", ev.plane_dsc, "Include per-plane DSC in the JSON report");

  cli::ExportMeshArgs ex;
  auto* exc = app.add_subcommand("export-mesh", "Write the OBJ of a tube given by radii");
  exc->add_option("--centerline", ex.centerline, "Centerline JSON")->required()->check(CLI::ExistingFile);
  exc->add_option("--radii", ex.radii, "Radii JSON or ground-truth JSON")->required()->check(CLI::ExistingFile);
  exc->add_option("--angles", ex.n_angles, "Angles per plane for ground-truth input")->capture_default_str();
  exc->add_option("--out", ex.out, "Output OBJ")->required();

  cli::CrossValidateArgs cv;
  auto* cvc = app.add_subcommand("cross-validate", "Leave-one-patient-out cross-validation");
  cvc->add_option("--dataset", cv.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cvc->add_option("--out", cv.out, "Report prefix")->required();
  add_train_config_options(cvc, cv.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ph) return cli::cmd_phantom(phantom);
    if (*mk) return cli::cmd_make_dataset(md);
    if (*trc) return cli::cmd_train(tr);
    if (*sgc) return cli::cmd_segment(sg);
    if (*evc) return cli::cmd_eval(ev);
    if (*exc) return cli::cmd_export_mesh(ex);
    if (*cvc) return cli::cmd_cross_validate(cv);
  } catch (const ValidationError& e) {
    std::cerr << "tubegcn: " << e.what() << "\n";
    return 2;
  } catch (const io::json::exception& e) {
    std::cerr << "tubegcn: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const io::fs::filesystem_error& e) {
    std::cerr << "tubegcn: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "tubegcn: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "tubegcn: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
