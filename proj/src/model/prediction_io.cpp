#include <cmath>
#include <fstream>

#include "jointcast/model/prediction.hpp"
#include "json.hpp"

namespace jointcast {

namespace {

using Json = nlohmann::ordered_json;

}  // namespace

void validate_prediction(const PredictionEntry& p, double tol) {
  const std::string who = "prediction '" + p.scenario_id + "': ";
  const std::size_t k = p.modes.size();
  if (k == 0) throw ValidationError(who + "no modes");
  if (p.pi.size() != k) throw ValidationError(who + "pi has " + std::to_string(p.pi.size()) + " entries for " + std::to_string(k) + " modes");
  double total = 0.0;
  for (double v : p.pi) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError(who + "pi entries must be finite and non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) throw ValidationError(who + "pi sums to " + std::to_string(total));
  const std::size_t a = p.agent_ids.size();
  if (a == 0) throw ValidationError(who + "no agents");
  const int horizon = p.horizon();
  if (horizon == 0) throw ValidationError(who + "empty trajectories");
  for (const auto& world : p.modes) {
    if (world.size() != a) throw ValidationError(who + "mode agent count differs from agent list");
    for (const auto& traj : world) {
      if (static_cast<int>(traj.size()) != horizon) throw ValidationError(who + "ragged trajectory lengths");
      for (const auto& pt : traj) {
        if (!pt.allFinite()) throw ValidationError(who + "non-finite trajectory point");
      }
    }
  }
}

std::string prediction_to_json_line(const PredictionEntry& p) {
  Json j;
  j["scenario_id"] = p.scenario_id;
  j["pi"] = p.pi;
  Json agents = Json::array();
  for (std::size_t i = 0; i < p.agent_ids.size(); ++i) {
    Json aj;
    aj["id"] = p.agent_ids[i];
    Json modes = Json::array();
    for (const auto& world : p.modes) {
      Json traj = Json::array();
      for (const auto& pt : world[i]) traj.push_back({pt.x(), pt.y()});
      modes.push_back(std::move(traj));
    }
    aj["modes"] = std::move(modes);
    agents.push_back(std::move(aj));
  }
  j["agents"] = std::move(agents);
  return j.dump();
}

PredictionEntry prediction_from_json_line(const std::string& line) {
  PredictionEntry p;
  try {
    const Json j = Json::parse(line);
    p.scenario_id = j.at("scenario_id").get<std::string>();
    p.pi = j.at("pi").get<std::vector<double>>();
    p.modes.assign(p.pi.size(), {});
    for (const auto& aj : j.at("agents")) {
      p.agent_ids.push_back(aj.at("id").get<std::int64_t>());
      const Json& modes = aj.at("modes");
      if (modes.size() != p.pi.size()) throw ParseError("agent mode count differs from pi length");
      for (std::size_t k = 0; k < modes.size(); ++k) {
        Trajectory traj;
        for (const auto& pt : modes[k]) {
          if (!pt.is_array() || pt.size() != 2) throw ParseError("point must be [x, y]");
          traj.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        }
        p.modes[k].push_back(std::move(traj));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  validate_prediction(p);
  return p;
}

void write_predictions(const std::vector<PredictionEntry>& preds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& p : preds) os << prediction_to_json_line(p) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<PredictionEntry> read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<PredictionEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      out.push_back(prediction_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
  return out;
}

}  // namespace jointcast
