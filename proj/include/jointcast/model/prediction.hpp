#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "jointcast/scene/scene.hpp"

namespace jointcast {

using Trajectory = std::vector<Point2>;

/// One scenario's joint forecast: K worlds over the target agents, world frame.
struct PredictionEntry {
  std::string scenario_id;
  std::vector<double> pi;                      // [K]
  std::vector<std::int64_t> agent_ids;         // [A']
  std::vector<std::vector<Trajectory>> modes;  // [K][A'][T']

  int num_modes() const { return static_cast<int>(modes.size()); }
  int num_agents() const { return static_cast<int>(agent_ids.size()); }
  int horizon() const { return modes.empty() || modes[0].empty() ? 0 : static_cast<int>(modes[0][0].size()); }
};

/// Decoder output mapped back to world coordinates. Scales stay in each
/// target's current frame (the Laplace axes are frame-aligned).
struct JointPrediction {
  PredictionEntry refined;
  std::vector<std::vector<Trajectory>> proposal;  // [K][A'][T']
  std::vector<std::vector<Trajectory>> scales;    // [K][A'][T'], > 0
};

/// Throws ValidationError on ragged shapes or when |sum(pi) - 1| > tol.
void validate_prediction(const PredictionEntry& p, double tol = 1e-4);

/// {"scenario_id", "pi", "agents": [{"id", "modes": [[[x, y] x T'] x K]}]}
std::string prediction_to_json_line(const PredictionEntry& p);
PredictionEntry prediction_from_json_line(const std::string& line);

void write_predictions(const std::vector<PredictionEntry>& preds, const std::filesystem::path& path);
std::vector<PredictionEntry> read_predictions(const std::filesystem::path& path);

}  // namespace jointcast
