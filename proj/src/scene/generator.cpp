#include "jointcast/scene/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jointcast/core/random.hpp"

namespace jointcast {

namespace {

// Centerline parameterized by arc length: straight when curvature == 0,
// otherwise a circular arc.
struct LaneCurve {
  Point2 anchor;
  double heading0 = 0.0;
  double curvature = 0.0;

  double heading(double s) const { return wrap_angle(heading0 + curvature * s); }

  Point2 point(double s) const {
    if (curvature == 0.0) return anchor + s * Point2(std::cos(heading0), std::sin(heading0));
    const double h = heading0 + curvature * s;
    return anchor + Point2((std::sin(h) - std::sin(heading0)) / curvature, (std::cos(heading0) - std::cos(h)) / curvature);
  }
};

double sample_speed(Rng& rng, AgentCategory c, const GeneratorConfig& cfg) {
  switch (c) {
    case AgentCategory::kPedestrian:
      return rng.uniform(cfg.pedestrian_speed_min, cfg.pedestrian_speed_max);
    case AgentCategory::kCyclist:
      return rng.uniform(cfg.cyclist_speed_min, cfg.cyclist_speed_max);
    case AgentCategory::kVehicle:
      break;
  }
  return rng.uniform(cfg.vehicle_speed_min, cfg.vehicle_speed_max);
}

AgentCategory sample_category(Rng& rng, const GeneratorConfig& cfg) {
  const double u = rng.uniform();
  if (u < cfg.pedestrian_probability) return AgentCategory::kPedestrian;
  if (u < cfg.pedestrian_probability + cfg.cyclist_probability) return AgentCategory::kCyclist;
  return AgentCategory::kVehicle;
}

// Arc-length positions at steps 0..n (index 0 is the spawn point).
std::vector<double> speed_profile(Rng& rng, double s0, double v0, int n, const GeneratorConfig& cfg) {
  std::vector<double> s(static_cast<std::size_t>(n) + 1);
  s[0] = s0;
  double v = v0;
  const double lo = (1.0 - cfg.speed_band) * v0, hi = (1.0 + cfg.speed_band) * v0;
  for (int k = 1; k <= n; ++k) {
    if (cfg.accel_noise > 0.0) v = std::clamp(v + cfg.accel_noise * rng.normal() * kStepSeconds, lo, hi);
    s[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k) - 1] + v * kStepSeconds;
  }
  return s;
}

}  // namespace

void validate_generator_config(const GeneratorConfig& cfg) {
  if (cfg.min_lanes < 1 || cfg.max_lanes < cfg.min_lanes) throw ConfigError("generator: invalid lane count range");
  if (cfg.min_agents < 1 || cfg.max_agents < cfg.min_agents) throw ConfigError("generator: invalid agent count range");
  if (cfg.history_steps < 2 || cfg.horizon < 1) throw ConfigError("generator: history needs >= 2 steps and horizon >= 1");
  if (cfg.max_agents_per_lane < 1) throw ConfigError("generator: lane capacity must be positive");
  if (cfg.min_agents > cfg.max_lanes * cfg.max_agents_per_lane) {
    throw ConfigError("generator: " + std::to_string(cfg.min_agents) + " agents exceed lane capacity " +
                      std::to_string(cfg.max_lanes * cfg.max_agents_per_lane));
  }
  if (cfg.piece_length <= 0.0 || cfg.point_spacing <= 0.0 || cfg.point_spacing > cfg.piece_length) {
    throw ConfigError("generator: invalid polygon spacing");
  }
  if (cfg.min_follow_gap <= 1.0 || cfg.follow_gap_min < cfg.min_follow_gap) {
    throw ConfigError("generator: follow gaps must exceed 1 m and the minimum gap");
  }
}

Scene generate_synthetic_scene(std::uint64_t seed, const GeneratorConfig& cfg, GeneratorTrace* trace) {
  validate_generator_config(cfg);
  Rng rng(derive_seed(seed, 0x5CE7E));
  Scene scene;
  scene.scenario_id = "syn-" + std::to_string(seed);
  scene.horizon = cfg.horizon;
  const int T = cfg.history_steps, H = cfg.horizon, total = T + H;

  // Lanes.
  const int lanes_needed = (cfg.min_agents + cfg.max_agents_per_lane - 1) / cfg.max_agents_per_lane;
  const int n_lanes = std::max(static_cast<int>(rng.uniform_int(cfg.min_lanes, cfg.max_lanes)), lanes_needed);
  std::vector<LaneCurve> lanes;
  for (int l = 0; l < n_lanes; ++l) {
    LaneCurve c;
    c.anchor = Point2(rng.uniform(-cfg.region, cfg.region), rng.uniform(-cfg.region, cfg.region));
    c.heading0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    if (rng.bernoulli(cfg.arc_probability)) {
      c.curvature = rng.uniform(cfg.min_curvature, cfg.max_curvature) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    }
    lanes.push_back(c);
  }
  std::int64_t next_polygon_id = 0;
  for (const auto& lane : lanes) {
    for (double s = -cfg.lane_back; s < cfg.lane_length - 1e-9; s += cfg.piece_length) {
      MapPolygon p;
      p.id = next_polygon_id++;
      p.kind = PolygonKind::kLane;
      const int n_pts = static_cast<int>(std::round(cfg.piece_length / cfg.point_spacing)) + 1;
      for (int i = 0; i < n_pts; ++i) {
        const double si = s + cfg.piece_length * i / (n_pts - 1);
        p.points.push_back(lane.point(si));
        p.headings.push_back(lane.heading(si));
      }
      scene.polygons.push_back(std::move(p));
    }
    if (rng.bernoulli(cfg.crosswalk_probability)) {
      const double s = rng.uniform(0.0, cfg.lane_length * 0.5);
      const Point2 c = lane.point(s);
      const double h = lane.heading(s) + std::numbers::pi / 2.0;
      const Point2 dir(std::cos(h), std::sin(h));
      MapPolygon p;
      p.id = next_polygon_id++;
      p.kind = PolygonKind::kCrosswalk;
      p.points = {c - 4.0 * dir, c + 4.0 * dir};
      p.headings = {wrap_angle(h), wrap_angle(h)};
      scene.polygons.push_back(std::move(p));
    }
  }

  // Agents.
  const int n_agents = std::min(static_cast<int>(rng.uniform_int(cfg.min_agents, cfg.max_agents)),
                                n_lanes * cfg.max_agents_per_lane);
  std::vector<int> movers_on_lane(static_cast<std::size_t>(n_lanes), 0);
  struct Plan {
    int lane = -1;
    int leader = -1;
    double v0 = 0.0;
    std::vector<double> s;  // arc length per step, moving agents only
  };
  std::vector<Plan> plans;
  GeneratorTrace local_trace;
  for (int a = 0; a < n_agents; ++a) {
    AgentTrack track;
    track.id = a;
    track.category = sample_category(rng, cfg);
    Plan plan;
    const bool parked = a > 0 && rng.bernoulli(cfg.static_probability);
    std::vector<int> open_lanes;
    for (int l = 0; l < n_lanes; ++l) {
      if (movers_on_lane[static_cast<std::size_t>(l)] < cfg.max_agents_per_lane) open_lanes.push_back(l);
    }
    if (!parked && !open_lanes.empty()) {
      // Follow an existing mover when its lane has room.
      std::vector<int> leaders;
      for (int b = 0; b < a; ++b) {
        const int l = plans[static_cast<std::size_t>(b)].lane;
        if (l >= 0 && movers_on_lane[static_cast<std::size_t>(l)] < cfg.max_agents_per_lane) leaders.push_back(b);
      }
      if (!leaders.empty() && rng.bernoulli(cfg.lead_follow_probability)) {
        const int b = leaders[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(leaders.size()) - 1))];
        const Plan& lead = plans[static_cast<std::size_t>(b)];
        plan.lane = lead.lane;
        plan.leader = b;
        track.category = scene.agents[static_cast<std::size_t>(b)].category;
        plan.v0 = lead.v0;
        const double gap = rng.uniform(cfg.follow_gap_min, cfg.follow_gap_max);
        plan.s = speed_profile(rng, lead.s[0] - gap, plan.v0, total, cfg);
        for (std::size_t k = 0; k < plan.s.size(); ++k) plan.s[k] = std::min(plan.s[k], lead.s[k] - cfg.min_follow_gap);
      } else {
        plan.lane = open_lanes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(open_lanes.size()) - 1))];
        plan.v0 = sample_speed(rng, track.category, cfg);
        plan.s = speed_profile(rng, rng.uniform(0.0, 40.0), plan.v0, total, cfg);
      }
      ++movers_on_lane[static_cast<std::size_t>(plan.lane)];
    }

    track.positions.resize(static_cast<std::size_t>(T));
    track.headings.resize(static_cast<std::size_t>(T));
    track.timestamps.resize(static_cast<std::size_t>(T));
    track.valid.assign(static_cast<std::size_t>(T), 1);
    for (int t = 0; t < T; ++t) track.timestamps[static_cast<std::size_t>(t)] = (t + 1) * kStepSeconds;
    if (plan.lane >= 0) {
      const LaneCurve& lane = lanes[static_cast<std::size_t>(plan.lane)];
      for (int t = 0; t < T; ++t) {
        const double s = plan.s[static_cast<std::size_t>(t) + 1];
        track.positions[static_cast<std::size_t>(t)] = lane.point(s);
        track.headings[static_cast<std::size_t>(t)] = lane.heading(s);
      }
      std::vector<Point2> fut(static_cast<std::size_t>(H));
      for (int k = 0; k < H; ++k) fut[static_cast<std::size_t>(k)] = lane.point(plan.s[static_cast<std::size_t>(T + k) + 1]);
      track.future_gt = std::move(fut);
      track.is_target = true;
    } else {
      const LaneCurve& lane = lanes[static_cast<std::size_t>(rng.uniform_int(0, n_lanes - 1))];
      const double s = rng.uniform(0.0, 100.0);
      const double h = lane.heading(s);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const Point2 p = lane.point(s) + side * cfg.static_offset * Point2(-std::sin(h), std::cos(h));
      for (int t = 0; t < T; ++t) {
        track.positions[static_cast<std::size_t>(t)] = p;
        track.headings[static_cast<std::size_t>(t)] = h;
      }
      track.future_gt = std::vector<Point2>(static_cast<std::size_t>(H), p);
      track.is_target = false;
    }
    if (a > 0 && rng.bernoulli(cfg.late_start_probability)) {
      const int late = static_cast<int>(rng.uniform_int(1, std::min(cfg.max_late_start, T - 2)));
      for (int t = 0; t < late; ++t) track.valid[static_cast<std::size_t>(t)] = 0;
    }
    for (int t = 0; t + 1 < T; ++t) {
      if (rng.bernoulli(cfg.dropout_probability)) track.valid[static_cast<std::size_t>(t)] = 0;
    }
    for (int t = 0; t < T; ++t) {
      if (!track.valid[static_cast<std::size_t>(t)]) {
        track.positions[static_cast<std::size_t>(t)] = Point2::Zero();
        track.headings[static_cast<std::size_t>(t)] = 0.0;
      }
    }
    local_trace.lane_of_agent.push_back(plan.lane);
    local_trace.leader_of_agent.push_back(plan.leader);
    local_trace.initial_speed.push_back(plan.v0);
    plans.push_back(std::move(plan));
    scene.agents.push_back(std::move(track));
  }
  if (trace != nullptr) *trace = std::move(local_trace);
  return scene;
}

std::vector<Scene> generate_synthetic_scenes(std::uint64_t seed, std::size_t count, const GeneratorConfig& cfg) {
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) scenes.push_back(generate_synthetic_scene(derive_seed(seed, i), cfg));
  return scenes;
}

}  // namespace jointcast
