#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jointcast/model/prediction.hpp"

namespace jointcast {

struct MetricOptions {
  double miss_threshold = 2.0;    // meters
  double collision_radius = 2.0;  // meters, point agents
};

/// Metrics of one scenario (or the dataset aggregate). Marginal fields are
/// means over the scenario's target agents.
struct ScenarioMetrics {
  std::string scenario_id;
  int num_agents = 0;
  int best_world = 0;  // k* by avgFDE

  double avg_min_fde_k = 0.0;
  double avg_min_fde_1 = 0.0;
  double avg_min_ade_k = 0.0;
  double avg_min_ade_1 = 0.0;
  double actor_mr_k = 0.0;
  double avg_brier_min_fde_k = 0.0;
  double actor_cr_k = 0.0;

  double min_fde_k = 0.0;
  double min_ade_k = 0.0;
  double mr_k = 0.0;
  double b_min_fde_k = 0.0;
};

/// Ground truth of one scenario: future trajectory per target agent id.
using GroundTruth = std::map<std::int64_t, Trajectory>;

/// Fills the multi-world fields. Throws ValidationError when pi is not
/// normalized within 1e-4 or an agent has no ground truth.
void multiworld_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt,
                        ScenarioMetrics& out);

/// Fills the marginal fields.
void marginal_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt,
                      ScenarioMetrics& out);

ScenarioMetrics scenario_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt = {});

/// Scenario means for the world-level fields; actor-level fields (actorMR,
/// actorCR and all marginal fields) are means over every actor.
ScenarioMetrics aggregate_metrics(const std::vector<ScenarioMetrics>& rows);

struct MetricReport {
  std::vector<ScenarioMetrics> rows;
  ScenarioMetrics aggregate;
};

/// Matches predictions to ground truth by scenario id; throws ValidationError
/// listing any scenario without a prediction.
MetricReport evaluate(const std::vector<PredictionEntry>& preds, const std::map<std::string, GroundTruth>& gt,
                      const MetricOptions& opt = {});

/// One row per scenario plus a final "aggregate" row.
std::string metrics_csv(const MetricReport& report);
void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path);

}  // namespace jointcast
