#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jointcast/core/gradcheck.hpp"
#include "jointcast/eval/metrics.hpp"
#include "jointcast/harness/run_config.hpp"
#include "jointcast/model/model.hpp"

namespace jointcast {

/// Scene files written by gen-data.
struct DataFiles {
  std::filesystem::path train;
  std::filesystem::path val;
};

/// Writes <dir>/train.jsonl and <dir>/val.jsonl; deterministic per cfg.seed.
DataFiles generate_data(const RunConfig& cfg, const std::filesystem::path& dir);

std::vector<SceneGeometry> build_geometries(const std::vector<Scene>& scenes, const ModelConfig& cfg);

/// Freshly initialized parameters, seeded from cfg.seed.
ParameterStore<float> init_parameters(const RunConfig& cfg);

/// Loads a checkpoint and checks it against the layout cfg implies.
template <typename Scalar>
ParameterStore<Scalar> load_model(const RunConfig& cfg, const std::filesystem::path& path);

/// Visiting order of the training scenes in `epoch`.
std::vector<std::size_t> epoch_order(const RunConfig& cfg, int epoch, std::size_t n);

/// Dropout seed of dataset scene `index` in `epoch`.
std::uint64_t dropout_seed(const RunConfig& cfg, int epoch, std::size_t index);

/// Loss of one scene. With `grad_scale` != 0 the gradient of grad_scale * L is
/// accumulated into the store. Dropout is active when `training`.
template <typename Scalar>
LossBreakdown scene_loss(ParameterStore<Scalar>& store, const SceneGeometry& geom, const ModelConfig& cfg,
                         bool training, std::uint64_t dropout_seed, double grad_scale = 0.0);

struct TrainLogRow {
  int epoch = 0;
  int step = 0;
  double l_propose = 0.0;
  double l_refine = 0.0;
  double l_cls = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

/// Trains on `scenes` with gradient accumulation over batch_size scenes and
/// cosine annealing per epoch. Writes <dir>/checkpoint_init.jckpt,
/// <dir>/checkpoint.jckpt (after every epoch) and <dir>/train_log.csv. On a
/// non-finite loss the last good checkpoint is kept and NumericError thrown.
TrainResult train(const RunConfig& cfg, const std::vector<Scene>& scenes, const std::filesystem::path& dir,
                  const std::function<void(const TrainLogRow&)>& on_row = {});

std::string train_log_csv(const std::vector<TrainLogRow>& rows);

/// Deterministic forward pass (dropout off) of one scene.
template <typename Scalar>
JointPrediction predict_scene(ParameterStore<Scalar>& store, const Scene& scene, const ModelConfig& cfg);

std::vector<PredictionEntry> predict(ParameterStore<float>& store, const std::vector<Scene>& scenes,
                                     const ModelConfig& cfg);

/// Every target keeps the velocity of its last two observed steps; K equal worlds.
PredictionEntry constant_velocity_prediction(const Scene& scene, int modes);

std::map<std::string, GroundTruth> ground_truth(const std::vector<Scene>& scenes);

struct InvarianceReport {
  double encoder_rigid = 0.0;       // map and agent encodings under rotation, translation and time shift
  double decoder_rigid = 0.0;       // proposal and refined trajectories, world frame
  double scores_rigid = 0.0;        // pi
  double permutation = 0.0;         // all outputs under agent and polygon permutations
  int trials = 0;

  bool passes(double tol) const {
    return encoder_rigid < tol && decoder_rigid < tol && scores_rigid < tol && permutation == 0.0;
  }
};

/// max |a - b| / max(1, max |a|).
double relative_deviation(const Matrix<double>& a, const Matrix<double>& b);

template <typename Scalar>
InvarianceReport check_invariance(ParameterStore<Scalar>& store, const std::vector<Scene>& scenes,
                                  const ModelConfig& cfg, int trials, std::uint64_t seed);

/// Small two-lane, two-target scene with an exact history and horizon.
Scene gradcheck_scene(std::uint64_t seed, int history, int horizon);

/// End-to-end total-loss gradcheck at double precision on gradcheck_scene.
GradcheckResult<double> model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, Index per_entry);

}  // namespace jointcast
