#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "jointcast/eval/metrics.hpp"
#include "jointcast/model/config.hpp"
#include "jointcast/scene/generator.hpp"

namespace jointcast {

/// Everything a CLI run needs. JSON keys mirror the field names below
/// (model sizes use the short names D, H, K, L_enc, L_dec, T, T_future).
struct RunConfig {
  ModelConfig model;
  GeneratorConfig generator;

  int epochs = 50;
  int batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 0.1;
  std::uint64_t seed = 0;

  int train_scenes = 200;
  int val_scenes = 50;

  int ensemble_iters = 50;
  int invariance_trials = 3;
  double invariance_tolerance = 1e-4;
  MetricOptions metrics;

  // Paths; empty means "not given".
  std::string train_path;
  std::string val_path;
  std::string checkpoint_path;
  std::string scenes_path;
  std::string predictions_path;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Parses JSON text; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace jointcast
