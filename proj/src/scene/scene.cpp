#include "jointcast/scene/scene.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace jointcast {

std::size_t Scene::num_targets() const {
  std::size_t n = 0;
  for (const auto& a : agents) n += a.is_target ? 1 : 0;
  return n;
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  if (r > std::numbers::pi) r -= kTwoPi;
  return r;
}

const char* to_string(PolygonKind k) { return k == PolygonKind::kLane ? "lane" : "crosswalk"; }

const char* to_string(AgentCategory c) {
  switch (c) {
    case AgentCategory::kVehicle:
      return "vehicle";
    case AgentCategory::kPedestrian:
      return "pedestrian";
    case AgentCategory::kCyclist:
      return "cyclist";
  }
  return "vehicle";
}

PolygonKind polygon_kind_from_string(const std::string& s) {
  if (s == "lane") return PolygonKind::kLane;
  if (s == "crosswalk") return PolygonKind::kCrosswalk;
  throw ValidationError("unknown polygon kind '" + s + "'");
}

AgentCategory agent_category_from_string(const std::string& s) {
  if (s == "vehicle") return AgentCategory::kVehicle;
  if (s == "pedestrian") return AgentCategory::kPedestrian;
  if (s == "cyclist") return AgentCategory::kCyclist;
  throw ValidationError("unknown agent category '" + s + "'");
}

void validate_scene(const Scene& scene, ValidationMode mode) {
  const std::string where = "scene '" + scene.scenario_id + "'";
  if (scene.horizon <= 0) throw ValidationError(where + ": horizon must be positive");
  for (const auto& p : scene.polygons) {
    const std::string pw = where + " polygon " + std::to_string(p.id);
    if (p.points.size() < 2) throw ValidationError(pw + ": fewer than 2 points");
    if (p.headings.size() != p.points.size()) throw ValidationError(pw + ": heading count differs from point count");
    for (std::size_t i = 0; i < p.points.size(); ++i) {
      if (!p.points[i].allFinite() || !std::isfinite(p.headings[i])) throw ValidationError(pw + ": non-finite geometry");
      if (i > 0 && p.points[i] == p.points[i - 1]) throw GeometryError(pw + ": consecutive points coincide");
    }
  }
  if (scene.agents.empty()) throw ValidationError(where + ": no agents");
  const std::size_t T = scene.agents.front().history_length();
  if (T == 0) throw ValidationError(where + ": empty history");
  bool any_target = false;
  std::set<std::int64_t> ids;
  for (const auto& a : scene.agents) {
    const std::string aw = where + " agent " + std::to_string(a.id);
    if (!ids.insert(a.id).second) throw ValidationError(aw + ": duplicate agent id");
    if (a.positions.size() != T || a.headings.size() != T || a.timestamps.size() != T || a.valid.size() != T) {
      throw ValidationError(aw + ": track arrays must all have the scene's history length " + std::to_string(T));
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) {
        const double dt = a.timestamps[t] - a.timestamps[t - 1];
        if (!(dt > 0.0) || std::abs(dt - kStepSeconds) > 1e-6) {
          throw ValidationError(aw + ": timestamps must increase in steps of 0.1 s");
        }
      }
      if (a.valid[t] && (!a.positions[t].allFinite() || !std::isfinite(a.headings[t]))) {
        throw ValidationError(aw + ": non-finite state at valid step " + std::to_string(t));
      }
    }
    if (a.is_target) {
      any_target = true;
      if (!a.valid[T - 1]) throw ValidationError(aw + ": target must be observed at the current step");
      if (mode == ValidationMode::kTraining && !a.future_gt) throw ValidationError(aw + ": target is missing future_gt");
    }
    if (a.future_gt) {
      if (a.future_gt->size() != static_cast<std::size_t>(scene.horizon)) {
        throw ValidationError(aw + ": future_gt has " + std::to_string(a.future_gt->size()) + " steps, horizon is " +
                              std::to_string(scene.horizon));
      }
      for (const auto& p : *a.future_gt) {
        if (!p.allFinite()) throw ValidationError(aw + ": non-finite future_gt");
      }
    }
  }
  if (!any_target) throw ValidationError(where + ": no target agent");
}

LocalFrame polygon_frame(const MapPolygon& polygon) {
  if (polygon.points.size() < 2) throw GeometryError("polygon " + std::to_string(polygon.id) + " has fewer than 2 points");
  const Point2 d = polygon.points[1] - polygon.points[0];
  if (d.x() == 0.0 && d.y() == 0.0) {
    throw GeometryError("polygon " + std::to_string(polygon.id) + ": first two points coincide");
  }
  return LocalFrame{polygon.points[0], wrap_angle(std::atan2(d.y(), d.x())), 0.0};
}

SceneFrames build_local_frames(const Scene& scene) {
  SceneFrames f;
  f.agents.reserve(scene.agents.size());
  for (const auto& a : scene.agents) {
    std::vector<LocalFrame> fr(a.history_length());
    for (std::size_t t = 0; t < fr.size(); ++t) fr[t] = LocalFrame{a.positions[t], wrap_angle(a.headings[t]), a.timestamps[t]};
    f.agents.push_back(std::move(fr));
  }
  f.polygons.reserve(scene.polygons.size());
  for (const auto& p : scene.polygons) f.polygons.push_back(polygon_frame(p));
  return f;
}

Point2 to_local(const LocalFrame& frame, const Point2& p) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  const Point2 d = p - frame.origin;
  return Point2(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
}

Point2 to_world(const LocalFrame& frame, const Point2& p) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  return frame.origin + Point2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
}

RelDescriptor rel_descriptor(const LocalFrame& query, const LocalFrame& key) {
  const Point2 local = to_local(query, key.origin);
  RelDescriptor d;
  d.distance = (key.origin - query.origin).norm();
  // Coincident frames get bearing 0; atan2 of a signed zero would give +-pi.
  d.bearing = d.distance > 0.0 ? std::atan2(local.y(), local.x()) : 0.0;
  d.heading_diff = wrap_angle(key.heading - query.heading);
  d.time_diff = key.time - query.time;
  return d;
}

Point2 RigidTransform::apply(const Point2& p) const {
  const double c = std::cos(theta), s = std::sin(theta);
  return Point2(c * p.x() - s * p.y(), s * p.x() + c * p.y()) + translation;
}

Scene transform_scene(const Scene& scene, const RigidTransform& g, double time_shift) {
  Scene out = scene;
  for (auto& p : out.polygons) {
    for (auto& pt : p.points) pt = g.apply(pt);
    for (auto& h : p.headings) h = g.apply_heading(h);
  }
  for (auto& a : out.agents) {
    for (std::size_t t = 0; t < a.positions.size(); ++t) {
      if (a.valid[t]) a.positions[t] = g.apply(a.positions[t]);
      a.headings[t] = g.apply_heading(a.headings[t]);
      a.timestamps[t] += time_shift;
    }
    if (a.future_gt) {
      for (auto& p : *a.future_gt) p = g.apply(p);
    }
  }
  return out;
}

Scene permute_scene(const Scene& scene, const std::vector<std::size_t>& agent_order,
                    const std::vector<std::size_t>& polygon_order) {
  if (agent_order.size() != scene.agents.size() || polygon_order.size() != scene.polygons.size()) {
    throw InputError("permute_scene: permutation sizes do not match the scene");
  }
  Scene out = scene;
  for (std::size_t i = 0; i < agent_order.size(); ++i) out.agents[i] = scene.agents.at(agent_order[i]);
  for (std::size_t i = 0; i < polygon_order.size(); ++i) out.polygons[i] = scene.polygons.at(polygon_order[i]);
  return out;
}

}  // namespace jointcast
