#pragma once

#include <cstdint>
#include <vector>

#include "jointcast/scene/scene.hpp"

namespace jointcast {

/// Knobs for the synthetic lane-following scene generator.
struct GeneratorConfig {
  int min_lanes = 2;
  int max_lanes = 8;
  int min_agents = 2;
  int max_agents = 10;
  int history_steps = 50;
  int horizon = 60;
  int max_agents_per_lane = 3;  // moving agents per lane

  double region = 60.0;          // lane starts lie in [-region, region]^2
  double lane_back = 60.0;       // lane extent behind its anchor, meters
  double lane_length = 200.0;    // lane extent ahead of its anchor, meters
  double piece_length = 30.0;    // lanes are cut into polygons of this length
  double point_spacing = 5.0;
  double arc_probability = 0.6;
  double min_curvature = 1.0 / 100.0;
  double max_curvature = 1.0 / 35.0;
  double crosswalk_probability = 0.3;  // per lane

  double vehicle_speed_min = 4.0, vehicle_speed_max = 12.0;
  double cyclist_speed_min = 3.0, cyclist_speed_max = 6.0;
  double pedestrian_speed_min = 1.0, pedestrian_speed_max = 2.0;
  double cyclist_probability = 0.1;
  double pedestrian_probability = 0.1;
  double accel_noise = 0.3;        // std of per-step acceleration, m/s^2
  double speed_band = 0.5;         // speed stays within (1 +- band) * initial speed

  double lead_follow_probability = 0.3;
  double follow_gap_min = 8.0, follow_gap_max = 20.0;
  double min_follow_gap = 5.0;     // followers never close below this arc-length gap
  double static_probability = 0.2;  // non-first agents parked beside a lane
  double static_offset = 4.0;

  double late_start_probability = 0.15;
  int max_late_start = 20;
  double dropout_probability = 0.02;
};

/// Generator bookkeeping exposed for tests.
struct GeneratorTrace {
  std::vector<int> lane_of_agent;   // -1 for parked agents
  std::vector<int> leader_of_agent;  // index of the leader for followers, else -1
  std::vector<double> initial_speed;
};

/// Throws ConfigError when the configuration cannot produce a scene.
void validate_generator_config(const GeneratorConfig& cfg);

/// Deterministic per (seed, cfg). Moving agents are targets; the first agent always moves.
Scene generate_synthetic_scene(std::uint64_t seed, const GeneratorConfig& cfg = {}, GeneratorTrace* trace = nullptr);

std::vector<Scene> generate_synthetic_scenes(std::uint64_t seed, std::size_t count, const GeneratorConfig& cfg = {});

}  // namespace jointcast
