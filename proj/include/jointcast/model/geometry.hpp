#pragma once

#include <vector>

#include "jointcast/core/layers.hpp"
#include "jointcast/model/config.hpp"
#include "jointcast/scene/scene.hpp"

namespace jointcast {

/// Edges of one attention family plus the descriptor rows they reference.
struct EdgeSet {
  EdgeList edges;
  Matrix<double> descriptors;  // [P, 4]; edges.pe_rows index these rows
};

/// Everything the network needs from a scene that does not depend on
/// parameters: invariant input features, neighborhoods and relative
/// descriptors. Built once per (scene, config) and reused across epochs.
///
/// Agent-state rows are a*T + t. Decoder rows are mode-major: k*Ad + i over
/// the Ad agents observed at the current (last history) step.
struct SceneGeometry {
  Index num_agents = 0;
  Index num_steps = 0;
  Index num_polygons = 0;
  Index num_modes = 0;
  SceneFrames frames;

  // Map.
  Matrix<double> segment_features;     // [S, 6] per centerline segment, polygon frame
  std::vector<Index> segment_offsets;  // [M + 1]
  Matrix<double> polygon_kinds;        // [M, kinds] one-hot
  EdgeSet map_map;

  // Agents.
  Matrix<double> agent_features;  // [A*T, 9]
  std::vector<char> agent_valid;  // [A*T]
  EdgeSet temporal;
  EdgeSet agent_map;
  EdgeSet social;

  // Decoder.
  std::vector<Index> decoder_agents;  // scene agent index of decoder agent i
  std::vector<Index> target_agents;   // decoder agent index of each target, scene order
  std::vector<LocalFrame> current_frames;  // per decoder agent
  EdgeSet mode_time;
  EdgeSet mode_map;
  EdgeSet mode_agent;
  EdgeSet mode_mode;

  // Ground-truth futures of the targets in their current frames, [A', 2T']
  // laid out x0 y0 x1 y1 ...; empty when the scene carries no futures.
  Matrix<double> future_local;
  bool has_future() const { return future_local.rows() > 0; }

  Index num_decoder_agents() const { return static_cast<Index>(decoder_agents.size()); }
  Index num_targets() const { return static_cast<Index>(target_agents.size()); }

  /// Decoder rows of the targets, mode-major: k*Ad + target_agents[j].
  std::vector<Index> target_rows() const;
};

inline constexpr Index kSegmentFeatures = 6;
inline constexpr Index kAgentFeatures = 6 + kNumAgentCategories;

/// Throws ValidationError when the scene does not match the configuration
/// (history length, horizon) and GeometryError for degenerate polygons.
SceneGeometry build_scene_geometry(const Scene& scene, const ModelConfig& cfg);

}  // namespace jointcast
