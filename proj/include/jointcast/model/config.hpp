#pragma once

#include <string>

#include "jointcast/core/array.hpp"

namespace jointcast {

/// Architecture hyperparameters shared by encoder, decoder and scoring.
struct ModelConfig {
  Index hidden = 128;
  int heads = 8;
  int modes = 6;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int recurrent_steps = 3;
  int chunk_steps = 20;
  int history_steps = 50;
  int horizon = 60;

  int time_span = 10;          // temporal attention looks back this many steps
  double agent_radius = 50.0;  // social / agent-to-agent neighborhoods, meters
  double map_radius = 50.0;    // agent-to-map neighborhoods, meters
  int knn_fallback = 8;        // used when nothing lies inside a radius
  int map_knn = 8;             // map-to-map neighbors per polygon

  int distance_frequencies = 6;
  int time_frequencies = 4;
  int angle_harmonics = 3;

  double dropout = 0.1;
  double scale_floor = 1e-3;
  bool detach_anchors = true;

  /// Throws ConfigError on inconsistent values.
  void validate() const {
    if (hidden <= 0 || heads <= 0 || hidden % heads != 0) {
      throw ConfigError("hidden width " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    }
    if (modes < 1) throw ConfigError("modes must be >= 1");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("layer counts must be >= 1");
    if (recurrent_steps < 1 || chunk_steps < 1 || recurrent_steps * chunk_steps != horizon) {
      throw ConfigError("recurrent_steps * chunk_steps must equal the horizon (" + std::to_string(recurrent_steps) +
                        " * " + std::to_string(chunk_steps) + " != " + std::to_string(horizon) + ")");
    }
    if (history_steps < 2) throw ConfigError("history_steps must be >= 2");
    if (time_span < 1 || knn_fallback < 1 || map_knn < 0) throw ConfigError("neighborhood sizes must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (!(scale_floor > 0.0)) throw ConfigError("scale_floor must be positive");
  }

  Index descriptor_features() const { return 2 + 2 * distance_frequencies + 4 * angle_harmonics + 2 * time_frequencies; }
};

}  // namespace jointcast
