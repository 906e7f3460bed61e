#include "jointcast/harness/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace jointcast {

namespace {

using Json = nlohmann::ordered_json;

template <typename T>
void read(const Json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end()) dst = it->get<T>();
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown " + where + " key '" + it.key() + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  validate_generator_config(generator);
  if (generator.history_steps != model.history_steps || generator.horizon != model.horizon) {
    throw ConfigError("generator history/horizon must match T/T_future");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0 || lr * weight_decay >= 1.0) throw ConfigError("weight_decay must satisfy 0 <= lr*wd < 1");
  if (train_scenes < 0 || val_scenes < 0) throw ConfigError("scene counts must be >= 0");
  if (ensemble_iters < 1) throw ConfigError("ensemble_iters must be >= 1");
  if (invariance_trials < 0 || !(invariance_tolerance > 0.0)) throw ConfigError("invalid invariance settings");
}

RunConfig run_config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    reject_unknown(j,
                   {"D", "H", "K", "L_enc", "L_dec", "recurrent_steps", "chunk_steps", "T", "T_future", "time_span",
                    "agent_radius", "map_radius", "knn_fallback", "map_knn", "distance_frequencies", "time_frequencies",
                    "angle_harmonics", "dropout", "scale_floor", "detach_anchors", "epochs", "batch_size", "lr",
                    "weight_decay", "seed", "train_scenes", "val_scenes", "ensemble_iters", "invariance_trials",
                    "invariance_tolerance", "miss_threshold", "collision_radius", "generator", "paths"},
                   "config");
    ModelConfig& m = c.model;
    read(j, "D", m.hidden);
    read(j, "H", m.heads);
    read(j, "K", m.modes);
    read(j, "L_enc", m.encoder_layers);
    read(j, "L_dec", m.decoder_layers);
    read(j, "recurrent_steps", m.recurrent_steps);
    read(j, "chunk_steps", m.chunk_steps);
    read(j, "T", m.history_steps);
    read(j, "T_future", m.horizon);
    read(j, "time_span", m.time_span);
    read(j, "agent_radius", m.agent_radius);
    read(j, "map_radius", m.map_radius);
    read(j, "knn_fallback", m.knn_fallback);
    read(j, "map_knn", m.map_knn);
    read(j, "distance_frequencies", m.distance_frequencies);
    read(j, "time_frequencies", m.time_frequencies);
    read(j, "angle_harmonics", m.angle_harmonics);
    read(j, "dropout", m.dropout);
    read(j, "scale_floor", m.scale_floor);
    read(j, "detach_anchors", m.detach_anchors);
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "lr", c.lr);
    read(j, "weight_decay", c.weight_decay);
    read(j, "seed", c.seed);
    read(j, "train_scenes", c.train_scenes);
    read(j, "val_scenes", c.val_scenes);
    read(j, "ensemble_iters", c.ensemble_iters);
    read(j, "invariance_trials", c.invariance_trials);
    read(j, "invariance_tolerance", c.invariance_tolerance);
    read(j, "miss_threshold", c.metrics.miss_threshold);
    read(j, "collision_radius", c.metrics.collision_radius);
    c.generator.history_steps = m.history_steps;
    c.generator.horizon = m.horizon;
    if (auto it = j.find("generator"); it != j.end()) {
      const Json& g = *it;
      GeneratorConfig& gc = c.generator;
      reject_unknown(g,
                     {"min_lanes", "max_lanes", "min_agents", "max_agents", "max_agents_per_lane", "arc_probability",
                      "crosswalk_probability", "accel_noise", "lead_follow_probability", "static_probability",
                      "late_start_probability", "dropout_probability"},
                     "generator");
      read(g, "min_lanes", gc.min_lanes);
      read(g, "max_lanes", gc.max_lanes);
      read(g, "min_agents", gc.min_agents);
      read(g, "max_agents", gc.max_agents);
      read(g, "max_agents_per_lane", gc.max_agents_per_lane);
      read(g, "arc_probability", gc.arc_probability);
      read(g, "crosswalk_probability", gc.crosswalk_probability);
      read(g, "accel_noise", gc.accel_noise);
      read(g, "lead_follow_probability", gc.lead_follow_probability);
      read(g, "static_probability", gc.static_probability);
      read(g, "late_start_probability", gc.late_start_probability);
      read(g, "dropout_probability", gc.dropout_probability);
    }
    if (auto it = j.find("paths"); it != j.end()) {
      const Json& p = *it;
      reject_unknown(p, {"train", "val", "checkpoint", "scenes", "predictions"}, "paths");
      read(p, "train", c.train_path);
      read(p, "val", c.val_path);
      read(p, "checkpoint", c.checkpoint_path);
      read(p, "scenes", c.scenes_path);
      read(p, "predictions", c.predictions_path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return run_config_from_json(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  Json j;
  j["D"] = m.hidden;
  j["H"] = m.heads;
  j["K"] = m.modes;
  j["L_enc"] = m.encoder_layers;
  j["L_dec"] = m.decoder_layers;
  j["recurrent_steps"] = m.recurrent_steps;
  j["chunk_steps"] = m.chunk_steps;
  j["T"] = m.history_steps;
  j["T_future"] = m.horizon;
  j["time_span"] = m.time_span;
  j["agent_radius"] = m.agent_radius;
  j["map_radius"] = m.map_radius;
  j["knn_fallback"] = m.knn_fallback;
  j["map_knn"] = m.map_knn;
  j["distance_frequencies"] = m.distance_frequencies;
  j["time_frequencies"] = m.time_frequencies;
  j["angle_harmonics"] = m.angle_harmonics;
  j["dropout"] = m.dropout;
  j["scale_floor"] = m.scale_floor;
  j["detach_anchors"] = m.detach_anchors;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["train_scenes"] = c.train_scenes;
  j["val_scenes"] = c.val_scenes;
  j["ensemble_iters"] = c.ensemble_iters;
  j["invariance_trials"] = c.invariance_trials;
  j["invariance_tolerance"] = c.invariance_tolerance;
  j["miss_threshold"] = c.metrics.miss_threshold;
  j["collision_radius"] = c.metrics.collision_radius;
  const GeneratorConfig& gc = c.generator;
  j["generator"] = {{"min_lanes", gc.min_lanes},
                    {"max_lanes", gc.max_lanes},
                    {"min_agents", gc.min_agents},
                    {"max_agents", gc.max_agents},
                    {"max_agents_per_lane", gc.max_agents_per_lane},
                    {"arc_probability", gc.arc_probability},
                    {"crosswalk_probability", gc.crosswalk_probability},
                    {"accel_noise", gc.accel_noise},
                    {"lead_follow_probability", gc.lead_follow_probability},
                    {"static_probability", gc.static_probability},
                    {"late_start_probability", gc.late_start_probability},
                    {"dropout_probability", gc.dropout_probability}};
  j["paths"] = {{"train", c.train_path},
                {"val", c.val_path},
                {"checkpoint", c.checkpoint_path},
                {"scenes", c.scenes_path},
                {"predictions", c.predictions_path}};
  return j.dump(2);
}

}  // namespace jointcast
