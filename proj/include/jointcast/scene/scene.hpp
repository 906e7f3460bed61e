#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jointcast/core/errors.hpp"

namespace jointcast {

using Point2 = Eigen::Vector2d;

enum class PolygonKind { kLane, kCrosswalk };
enum class AgentCategory { kVehicle, kPedestrian, kCyclist };

inline constexpr int kNumPolygonKinds = 2;
inline constexpr int kNumAgentCategories = 3;

/// Time between consecutive track samples, seconds.
inline constexpr double kStepSeconds = 0.1;

struct MapPolygon {
  std::int64_t id = 0;
  PolygonKind kind = PolygonKind::kLane;
  std::vector<Point2> points;   // centerline, meters
  std::vector<double> headings;  // radians, one per point
};

struct AgentTrack {
  std::int64_t id = 0;
  AgentCategory category = AgentCategory::kVehicle;
  std::vector<Point2> positions;  // [T] meters
  std::vector<double> headings;   // [T] radians
  std::vector<double> timestamps;  // [T] seconds
  std::vector<char> valid;        // [T]
  bool is_target = false;
  std::optional<std::vector<Point2>> future_gt;  // [T'] meters

  std::size_t history_length() const { return positions.size(); }
};

struct Scene {
  std::string scenario_id;
  std::vector<MapPolygon> polygons;
  std::vector<AgentTrack> agents;
  int horizon = 60;

  std::size_t num_targets() const;
  std::size_t history_length() const { return agents.empty() ? 0 : agents.front().history_length(); }
};

enum class ValidationMode {
  kInference,  // future_gt optional
  kTraining,   // every target must carry future_gt
};

/// Throws ValidationError (or GeometryError for degenerate polygons) when the
/// scene breaks a structural invariant.
void validate_scene(const Scene& scene, ValidationMode mode = ValidationMode::kInference);

/// Angle wrapped to (-pi, pi].
double wrap_angle(double a);

const char* to_string(PolygonKind k);
const char* to_string(AgentCategory c);
PolygonKind polygon_kind_from_string(const std::string& s);
AgentCategory agent_category_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Local frames and relative descriptors

struct LocalFrame {
  Point2 origin = Point2::Zero();
  double heading = 0.0;  // (-pi, pi]
  double time = 0.0;
};

struct RelDescriptor {
  double distance = 0.0;
  double bearing = 0.0;       // direction of the key seen from the query frame
  double heading_diff = 0.0;  // key heading relative to query heading
  double time_diff = 0.0;     // key time minus query time
};

struct SceneFrames {
  std::vector<std::vector<LocalFrame>> agents;  // [A][T]
  std::vector<LocalFrame> polygons;             // [M]
};

/// Agent-state frames (position, heading, timestamp at each step) and polygon
/// frames (first centerline point, heading of the first segment, time 0).
SceneFrames build_local_frames(const Scene& scene);

LocalFrame polygon_frame(const MapPolygon& polygon);

RelDescriptor rel_descriptor(const LocalFrame& query, const LocalFrame& key);

/// `p` expressed in `frame` coordinates.
Point2 to_local(const LocalFrame& frame, const Point2& p);
Point2 to_world(const LocalFrame& frame, const Point2& p);

// ---------------------------------------------------------------------------
// Scene transforms used by invariance checks

struct RigidTransform {
  double theta = 0.0;
  Point2 translation = Point2::Zero();

  Point2 apply(const Point2& p) const;
  double apply_heading(double h) const { return wrap_angle(h + theta); }
};

/// Rotates/translates every position and heading and shifts every timestamp by `time_shift`.
Scene transform_scene(const Scene& scene, const RigidTransform& g, double time_shift = 0.0);

/// Output agent i is input agent agent_order[i]; likewise for polygons.
Scene permute_scene(const Scene& scene, const std::vector<std::size_t>& agent_order,
                    const std::vector<std::size_t>& polygon_order);

}  // namespace jointcast
