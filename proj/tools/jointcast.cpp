// jointcast command-line entry point.
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "jointcast/core/checkpoint.hpp"
#include "jointcast/eval/ensemble.hpp"
#include "jointcast/harness/harness.hpp"
#include "jointcast/scene/scene_io.hpp"
#include "json.hpp"

using namespace jointcast;

namespace {

struct Common {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "Overrides the configured seed");
  auto* o = cmd->add_option("--out", c.out, "Output path");
  if (out_required) o->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& configured, const char* what) {
  const std::string& p = flag.empty() ? configured : flag;
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path given");
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint multi-agent trajectory forecasting"};
  app.require_subcommand(1);

  Common gen_c, train_c, pred_c, eval_c, ens_c, inv_c, grad_c;
  std::string train_data, pred_ckpt, pred_scenes, pred_baseline, eval_preds, eval_scenes, inv_ckpt, inv_scenes;
  std::vector<std::string> ens_preds;
  int inv_trials = -1;
  Index grad_per_entry = 3;

  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/val scene files into --out");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "Train and write checkpoints and the log into --out");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Training scene file (default: paths.train)");

  auto* pr = app.add_subcommand("predict", "Write a prediction file");
  add_common(pr, pred_c);
  pr->add_option("--checkpoint", pred_ckpt, "Checkpoint (default: paths.checkpoint)");
  pr->add_option("--scenes", pred_scenes, "Scene file (default: paths.scenes)");
  pr->add_option("--baseline", pred_baseline, "Use a baseline instead of the model")->check(CLI::IsMember({"constant-velocity"}));

  auto* ev = app.add_subcommand("eval", "Write the metric CSV");
  add_common(ev, eval_c);
  ev->add_option("--predictions", eval_preds, "Prediction file (default: paths.predictions)");
  ev->add_option("--scenes", eval_scenes, "Scene file with ground truth (default: paths.scenes)");

  auto* en = app.add_subcommand("ensemble", "Cluster several prediction files into one");
  add_common(en, ens_c);
  en->add_option("--predictions", ens_preds, "Prediction files")->required()->expected(1, -1);

  auto* inv = app.add_subcommand("check-invariance", "Audit rigid, time-shift and permutation invariance");
  add_common(inv, inv_c, false);
  inv->add_option("--checkpoint", inv_ckpt, "Checkpoint (default: paths.checkpoint)");
  inv->add_option("--scenes", inv_scenes, "Scene file (default: paths.scenes)");
  inv->add_option("--trials", inv_trials, "Trials per scene (default: invariance_trials)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the end-to-end loss at 64-bit");
  add_common(gc, grad_c, false);
  gc->add_option("--per-entry", grad_per_entry, "Coordinates probed per parameter entry (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) {
      const RunConfig cfg = resolve(gen_c);
      const DataFiles f = generate_data(cfg, gen_c.out);
      std::cout << "wrote " << f.train.string() << " (" << cfg.train_scenes << " scenes) and " << f.val.string() << " ("
                << cfg.val_scenes << " scenes)\n";
    } else if (*tr) {
      const RunConfig cfg = resolve(train_c);
      const auto scenes = read_scenes(pick(train_data, cfg.train_path, "training data"), ValidationMode::kTraining);
      const TrainResult r = train(cfg, scenes, train_c.out, [](const TrainLogRow& row) {
        std::cout << "epoch " << row.epoch << " step " << row.step << " loss " << row.total << " lr " << row.lr << "\n";
      });
      std::cout << "final epoch loss " << r.epoch_loss.back() << "\n";
    } else if (*pr) {
      const RunConfig cfg = resolve(pred_c);
      const auto scenes = read_scenes(pick(pred_scenes, cfg.scenes_path, "scene"), ValidationMode::kInference);
      std::vector<PredictionEntry> preds;
      if (pred_baseline == "constant-velocity") {
        for (const auto& s : scenes) preds.push_back(constant_velocity_prediction(s, cfg.model.modes));
      } else {
        ParameterStore<float> store = load_model<float>(cfg, pick(pred_ckpt, cfg.checkpoint_path, "checkpoint"));
        preds = predict(store, scenes, cfg.model);
      }
      write_predictions(preds, pred_c.out);
    } else if (*ev) {
      const RunConfig cfg = resolve(eval_c);
      const auto preds = read_predictions(pick(eval_preds, cfg.predictions_path, "prediction"));
      const auto scenes = read_scenes(pick(eval_scenes, cfg.scenes_path, "scene"), ValidationMode::kTraining);
      const MetricReport report = evaluate(preds, ground_truth(scenes), cfg.metrics);
      write_metrics_csv(report, eval_c.out);
      std::cout << "avgMinFDE_K " << report.aggregate.avg_min_fde_k << " avgBrierMinFDE_K "
                << report.aggregate.avg_brier_min_fde_k << " minFDE_K " << report.aggregate.min_fde_k << "\n";
    } else if (*en) {
      const RunConfig cfg = resolve(ens_c);
      std::map<std::string, std::vector<PredictionEntry>> by_scene;
      for (const auto& path : ens_preds) {
        for (auto& p : read_predictions(path)) by_scene[p.scenario_id].push_back(std::move(p));
      }
      std::vector<PredictionEntry> out;
      std::uint64_t index = 0;
      for (const auto& [id, members] : by_scene) {
        if (members.size() != ens_preds.size()) throw ValidationError("scenario '" + id + "' is missing from some prediction files");
        EnsembleOptions opt;
        opt.modes = cfg.model.modes;
        opt.iters = cfg.ensemble_iters;
        opt.seed = derive_seed(cfg.seed, index++);
        out.push_back(ensemble_scene(members, opt));
      }
      write_predictions(out, ens_c.out);
    } else if (*inv) {
      const RunConfig cfg = resolve(inv_c);
      ParameterStore<float> store = load_model<float>(cfg, pick(inv_ckpt, cfg.checkpoint_path, "checkpoint"));
      const auto scenes = read_scenes(pick(inv_scenes, cfg.scenes_path, "scene"), ValidationMode::kInference);
      const InvarianceReport r =
          check_invariance(store, scenes, cfg.model, inv_trials >= 0 ? inv_trials : cfg.invariance_trials, cfg.seed);
      nlohmann::ordered_json j;
      j["trials"] = r.trials;
      j["encoder_rigid"] = r.encoder_rigid;
      j["decoder_rigid"] = r.decoder_rigid;
      j["scores_rigid"] = r.scores_rigid;
      j["permutation"] = r.permutation;
      j["tolerance"] = cfg.invariance_tolerance;
      j["pass"] = r.passes(cfg.invariance_tolerance);
      std::cout << j.dump(2) << "\n";
      if (!inv_c.out.empty()) write_text(inv_c.out, j.dump(2) + "\n");
      if (!r.passes(cfg.invariance_tolerance)) return kExitNumeric;
    } else if (*gc) {
      RunConfig cfg = resolve(grad_c);
      const GradcheckResult<double> r = model_gradcheck(cfg.model, cfg.seed, grad_per_entry);
      nlohmann::ordered_json j;
      j["coordinates"] = r.coordinates;
      j["max_rel_error"] = r.max_rel_error;
      j["worst"] = r.worst;
      j["pass"] = r.max_rel_error < 1e-4;
      std::cout << j.dump(2) << "\n";
      if (!grad_c.out.empty()) write_text(grad_c.out, j.dump(2) + "\n");
      if (r.max_rel_error >= 1e-4) return kExitNumeric;
    }
  } catch (const Error& e) {
    std::cerr << "jointcast: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "jointcast: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
