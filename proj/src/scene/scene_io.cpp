#include "jointcast/scene/scene_io.hpp"

#include <fstream>

#include "json.hpp"

namespace jointcast {

namespace {

using Json = nlohmann::ordered_json;

Json points_json(const std::vector<Point2>& pts) {
  Json arr = Json::array();
  for (const auto& p : pts) arr.push_back({p.x(), p.y()});
  return arr;
}

std::vector<Point2> points_from(const Json& j) {
  std::vector<Point2> out;
  out.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw ParseError("point must be [x, y]");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

const Json& field(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'");
  return *it;
}

}  // namespace

std::string scene_to_json_line(const Scene& scene) {
  Json j;
  j["scenario_id"] = scene.scenario_id;
  Json polys = Json::array();
  for (const auto& p : scene.polygons) {
    Json pj;
    pj["id"] = p.id;
    pj["kind"] = to_string(p.kind);
    pj["points"] = points_json(p.points);
    pj["headings"] = p.headings;
    polys.push_back(std::move(pj));
  }
  j["polygons"] = std::move(polys);
  Json agents = Json::array();
  for (const auto& a : scene.agents) {
    Json aj;
    aj["id"] = a.id;
    aj["category"] = to_string(a.category);
    aj["positions"] = points_json(a.positions);
    aj["headings"] = a.headings;
    aj["timestamps"] = a.timestamps;
    Json valid = Json::array();
    for (char v : a.valid) valid.push_back(v != 0);
    aj["valid"] = std::move(valid);
    aj["is_target"] = a.is_target;
    if (a.future_gt) aj["future_gt"] = points_json(*a.future_gt);
    agents.push_back(std::move(aj));
  }
  j["agents"] = std::move(agents);
  return j.dump();
}

Scene scene_from_json_line(const std::string& line, ValidationMode mode) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  Scene s;
  try {
    s.scenario_id = field(j, "scenario_id").get<std::string>();
    for (const auto& pj : field(j, "polygons")) {
      MapPolygon p;
      p.id = field(pj, "id").get<std::int64_t>();
      p.kind = polygon_kind_from_string(field(pj, "kind").get<std::string>());
      p.points = points_from(field(pj, "points"));
      p.headings = field(pj, "headings").get<std::vector<double>>();
      s.polygons.push_back(std::move(p));
    }
    for (const auto& aj : field(j, "agents")) {
      AgentTrack a;
      a.id = field(aj, "id").get<std::int64_t>();
      a.category = agent_category_from_string(field(aj, "category").get<std::string>());
      a.positions = points_from(field(aj, "positions"));
      a.headings = field(aj, "headings").get<std::vector<double>>();
      a.timestamps = field(aj, "timestamps").get<std::vector<double>>();
      for (const auto& v : field(aj, "valid")) a.valid.push_back(v.get<bool>() ? 1 : 0);
      a.is_target = field(aj, "is_target").get<bool>();
      if (auto it = aj.find("future_gt"); it != aj.end() && !it->is_null()) a.future_gt = points_from(*it);
      s.agents.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  for (const auto& a : s.agents) {
    if (a.future_gt) {
      s.horizon = static_cast<int>(a.future_gt->size());
      break;
    }
  }
  validate_scene(s, mode);
  return s;
}

void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& s : scenes) os << scene_to_json_line(s) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Scene> read_scenes(const std::filesystem::path& path, ValidationMode mode) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<Scene> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      scenes.push_back(scene_from_json_line(line, mode));
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    } catch (const GeometryError& e) {
      throw GeometryError(where + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
  return scenes;
}

}  // namespace jointcast
