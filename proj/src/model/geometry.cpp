#include "jointcast/model/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

namespace jointcast {

namespace {

struct Candidate {
  RelDescriptor d;
  Index key = 0;
};

// Order by descriptor content, not by key index, so the neighbor order (and
// with it every floating-point reduction) is unchanged when inputs are permuted.
bool descriptor_less(const Candidate& a, const Candidate& b) {
  return std::tie(a.d.distance, a.d.bearing, a.d.heading_diff, a.d.time_diff, a.key) <
         std::tie(b.d.distance, b.d.bearing, b.d.heading_diff, b.d.time_diff, b.key);
}

// The k nearest of sorted candidates, extended by any that tie the k-th
// distance up to rounding. Evenly spaced map pieces produce exact ties, and
// cutting through one would let rounding pick the neighbor set.
std::vector<Candidate> nearest(std::vector<Candidate> sorted, int k) {
  std::size_t n = std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(std::max(k, 0)));
  if (n == 0) return {};
  const double cut = sorted[n - 1].d.distance * (1.0 + 1e-9) + 1e-9;
  while (n < sorted.size() && sorted[n].d.distance <= cut) ++n;
  sorted.resize(n);
  return sorted;
}

// Candidates inside `radius`, or the `fallback` nearest when none are.
std::vector<Candidate> within_radius(std::vector<Candidate> cands, double radius, int fallback) {
  std::sort(cands.begin(), cands.end(), descriptor_less);
  std::vector<Candidate> in;
  for (const auto& c : cands) {
    if (c.d.distance < radius) in.push_back(c);
  }
  return in.empty() ? nearest(std::move(cands), fallback) : in;
}

// Appends candidates of one query as edges with their own descriptor rows.
void emit(EdgeSet& set, std::vector<RelDescriptor>& rows, const std::vector<Candidate>& cands) {
  for (const auto& c : cands) {
    set.edges.add_edge(c.key, static_cast<Index>(rows.size()));
    rows.push_back(c.d);
  }
  set.edges.close_query();
}

Matrix<double> pack(const std::vector<RelDescriptor>& ds) {
  Matrix<double> m(static_cast<Index>(ds.size()), 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.row(static_cast<Index>(i)) << ds[i].distance, ds[i].bearing, ds[i].heading_diff, ds[i].time_diff;
  }
  return m;
}

RelDescriptor static_key(RelDescriptor d) {
  // Map elements are timeless; dropping the time offset keeps agent-map
  // relations invariant to shifts of the time axis.
  d.time_diff = 0.0;
  return d;
}

}  // namespace

std::vector<Index> SceneGeometry::target_rows() const {
  std::vector<Index> rows;
  const Index ad = num_decoder_agents();
  for (Index k = 0; k < num_modes; ++k) {
    for (Index j : target_agents) rows.push_back(k * ad + j);
  }
  return rows;
}

SceneGeometry build_scene_geometry(const Scene& scene, const ModelConfig& cfg) {
  cfg.validate();
  if (scene.agents.empty()) throw ValidationError("scene '" + scene.scenario_id + "' has no agents");
  if (static_cast<int>(scene.history_length()) != cfg.history_steps) {
    throw ValidationError("scene '" + scene.scenario_id + "' has " + std::to_string(scene.history_length()) +
                          " history steps, model expects " + std::to_string(cfg.history_steps));
  }
  if (scene.horizon != cfg.horizon) {
    throw ValidationError("scene '" + scene.scenario_id + "' horizon " + std::to_string(scene.horizon) +
                          " differs from model horizon " + std::to_string(cfg.horizon));
  }
  SceneGeometry g;
  g.frames = build_local_frames(scene);
  const Index A = static_cast<Index>(scene.agents.size());
  const Index T = cfg.history_steps;
  const Index M = static_cast<Index>(scene.polygons.size());
  const Index K = cfg.modes;
  g.num_agents = A;
  g.num_steps = T;
  g.num_polygons = M;
  g.num_modes = K;

  // Polygon segment features in each polygon's own frame.
  std::vector<std::array<double, kSegmentFeatures>> segs;
  g.segment_offsets.push_back(0);
  g.polygon_kinds = Matrix<double>::Zero(M, kNumPolygonKinds);
  for (Index m = 0; m < M; ++m) {
    const MapPolygon& poly = scene.polygons[static_cast<std::size_t>(m)];
    const LocalFrame& f = g.frames.polygons[static_cast<std::size_t>(m)];
    g.polygon_kinds(m, static_cast<Index>(poly.kind)) = 1.0;
    double prev_heading = f.heading;
    for (std::size_t i = 0; i + 1 < poly.points.size(); ++i) {
      const Point2 d = poly.points[i + 1] - poly.points[i];
      const double h = std::atan2(d.y(), d.x());
      const double rel = wrap_angle(h - f.heading);
      const Point2 mid = to_local(f, 0.5 * (poly.points[i] + poly.points[i + 1]));
      segs.push_back({d.norm() / 10.0, std::cos(rel), std::sin(rel), wrap_angle(h - prev_heading), mid.x() / 30.0,
                      mid.y() / 30.0});
      prev_heading = h;
    }
    g.segment_offsets.push_back(static_cast<Index>(segs.size()));
  }
  g.segment_features.resize(static_cast<Index>(segs.size()), kSegmentFeatures);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (Index c = 0; c < kSegmentFeatures; ++c) g.segment_features(static_cast<Index>(i), c) = segs[i][static_cast<std::size_t>(c)];
  }

  // Map-map: k nearest other polygons.
  {
    std::vector<RelDescriptor> rows;
    for (Index m = 0; m < M; ++m) {
      std::vector<Candidate> cands;
      for (Index n = 0; n < M; ++n) {
        if (n == m) continue;
        cands.push_back({static_key(rel_descriptor(g.frames.polygons[static_cast<std::size_t>(m)],
                                                   g.frames.polygons[static_cast<std::size_t>(n)])),
                         n});
      }
      std::sort(cands.begin(), cands.end(), descriptor_less);
      cands = nearest(std::move(cands), cfg.map_knn);
      emit(g.map_map, rows, cands);
    }
    g.map_map.descriptors = pack(rows);
  }

  // Per-step agent features, all frame-local.
  g.agent_features = Matrix<double>::Zero(A * T, kAgentFeatures);
  g.agent_valid.assign(static_cast<std::size_t>(A * T), 0);
  for (Index a = 0; a < A; ++a) {
    const AgentTrack& tr = scene.agents[static_cast<std::size_t>(a)];
    for (Index t = 0; t < T; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const Index row = a * T + t;
      if (!tr.valid[ts]) continue;
      g.agent_valid[static_cast<std::size_t>(row)] = 1;
      auto f = g.agent_features.row(row);
      f(5) = 1.0;
      f(6 + static_cast<Index>(tr.category)) = 1.0;
      if (t > 0 && tr.valid[ts - 1]) {
        const LocalFrame& cur = g.frames.agents[static_cast<std::size_t>(a)][ts];
        const Point2 vel = to_local(cur, tr.positions[ts - 1]) / -kStepSeconds;
        f(0) = vel.x() / 10.0;
        f(1) = vel.y() / 10.0;
        f(2) = vel.norm() / 10.0;
        f(3) = wrap_angle(tr.headings[ts] - tr.headings[ts - 1]) / kStepSeconds;
        f(4) = 1.0;
      }
    }
  }

  // Temporal: causal, the step itself plus earlier valid steps within the look-back span.
  {
    std::vector<RelDescriptor> rows;
    for (Index a = 0; a < A; ++a) {
      const auto& fr = g.frames.agents[static_cast<std::size_t>(a)];
      for (Index t = 0; t < T; ++t) {
        std::vector<Candidate> cands;
        if (g.agent_valid[static_cast<std::size_t>(a * T + t)]) {
          for (Index s = std::max<Index>(0, t - cfg.time_span); s <= t; ++s) {
            if (!g.agent_valid[static_cast<std::size_t>(a * T + s)]) continue;
            cands.push_back({rel_descriptor(fr[static_cast<std::size_t>(t)], fr[static_cast<std::size_t>(s)]), a * T + s});
          }
        }
        emit(g.temporal, rows, cands);
      }
    }
    g.temporal.descriptors = pack(rows);
  }

  // Agent-map and social, per agent state.
  {
    std::vector<RelDescriptor> map_rows, social_rows;
    for (Index a = 0; a < A; ++a) {
      for (Index t = 0; t < T; ++t) {
        std::vector<Candidate> map_c, soc_c;
        if (g.agent_valid[static_cast<std::size_t>(a * T + t)]) {
          const LocalFrame& q = g.frames.agents[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
          for (Index m = 0; m < M; ++m) {
            map_c.push_back({static_key(rel_descriptor(q, g.frames.polygons[static_cast<std::size_t>(m)])), m});
          }
          map_c = within_radius(std::move(map_c), cfg.map_radius, cfg.knn_fallback);
          for (Index b = 0; b < A; ++b) {
            if (b == a || !g.agent_valid[static_cast<std::size_t>(b * T + t)]) continue;
            soc_c.push_back({rel_descriptor(q, g.frames.agents[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]),
                             b * T + t});
          }
          soc_c = within_radius(std::move(soc_c), cfg.agent_radius, cfg.knn_fallback);
        }
        emit(g.agent_map, map_rows, map_c);
        emit(g.social, social_rows, soc_c);
      }
    }
    g.agent_map.descriptors = pack(map_rows);
    g.social.descriptors = pack(social_rows);
  }

  // Decoder agents: observed at the current step, ordered by agent id so the
  // decoder sees the same row order whatever the input order.
  std::vector<Index> by_id(static_cast<std::size_t>(A));
  for (Index a = 0; a < A; ++a) by_id[static_cast<std::size_t>(a)] = a;
  std::stable_sort(by_id.begin(), by_id.end(), [&](Index x, Index y) {
    return scene.agents[static_cast<std::size_t>(x)].id < scene.agents[static_cast<std::size_t>(y)].id;
  });
  for (Index a : by_id) {
    const AgentTrack& tr = scene.agents[static_cast<std::size_t>(a)];
    if (!tr.valid[static_cast<std::size_t>(T - 1)]) continue;
    if (tr.is_target) g.target_agents.push_back(static_cast<Index>(g.decoder_agents.size()));
    g.decoder_agents.push_back(a);
    g.current_frames.push_back(g.frames.agents[static_cast<std::size_t>(a)][static_cast<std::size_t>(T - 1)]);
  }
  if (g.target_agents.empty()) throw ValidationError("scene '" + scene.scenario_id + "' has no target observed at the current step");
  const Index Ad = g.num_decoder_agents();

  // Per-agent descriptor rows shared by all modes; edges replicate them per mode.
  std::vector<std::vector<Candidate>> time_c(static_cast<std::size_t>(Ad)), map_c(static_cast<std::size_t>(Ad)),
      agent_c(static_cast<std::size_t>(Ad));
  std::vector<RelDescriptor> time_rows, map_rows, agent_rows;
  std::vector<std::vector<Index>> time_pe(static_cast<std::size_t>(Ad)), map_pe(static_cast<std::size_t>(Ad)),
      agent_pe(static_cast<std::size_t>(Ad));
  for (Index i = 0; i < Ad; ++i) {
    const auto is = static_cast<std::size_t>(i);
    const Index a = g.decoder_agents[is];
    const LocalFrame& q = g.current_frames[is];
    for (Index t = 0; t < T; ++t) {
      if (!g.agent_valid[static_cast<std::size_t>(a * T + t)]) continue;
      time_c[is].push_back({rel_descriptor(q, g.frames.agents[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)]), a * T + t});
    }
    std::vector<Candidate> mc;
    for (Index m = 0; m < M; ++m) mc.push_back({static_key(rel_descriptor(q, g.frames.polygons[static_cast<std::size_t>(m)])), m});
    map_c[is] = within_radius(std::move(mc), cfg.map_radius, cfg.knn_fallback);
    std::vector<Candidate> ac;
    for (Index j = 0; j < Ad; ++j) {
      if (j != i) ac.push_back({rel_descriptor(q, g.current_frames[static_cast<std::size_t>(j)]), j});
    }
    agent_c[is] = within_radius(std::move(ac), cfg.agent_radius, cfg.knn_fallback);
    for (const auto& c : time_c[is]) {
      time_pe[is].push_back(static_cast<Index>(time_rows.size()));
      time_rows.push_back(c.d);
    }
    for (const auto& c : map_c[is]) {
      map_pe[is].push_back(static_cast<Index>(map_rows.size()));
      map_rows.push_back(c.d);
    }
    for (const auto& c : agent_c[is]) {
      agent_pe[is].push_back(static_cast<Index>(agent_rows.size()));
      agent_rows.push_back(c.d);
    }
  }
  for (Index k = 0; k < K; ++k) {
    for (Index i = 0; i < Ad; ++i) {
      const auto is = static_cast<std::size_t>(i);
      for (std::size_t e = 0; e < time_c[is].size(); ++e) g.mode_time.edges.add_edge(time_c[is][e].key, time_pe[is][e]);
      g.mode_time.edges.close_query();
      for (std::size_t e = 0; e < map_c[is].size(); ++e) g.mode_map.edges.add_edge(map_c[is][e].key, map_pe[is][e]);
      g.mode_map.edges.close_query();
      for (std::size_t e = 0; e < agent_c[is].size(); ++e) {
        g.mode_agent.edges.add_edge(k * Ad + agent_c[is][e].key, agent_pe[is][e]);
      }
      g.mode_agent.edges.close_query();
      for (Index k2 = 0; k2 < K; ++k2) {
        if (k2 != k) g.mode_mode.edges.add_edge(k2 * Ad + i, 0);
      }
      g.mode_mode.edges.close_query();
    }
  }
  g.mode_time.descriptors = pack(time_rows);
  g.mode_map.descriptors = pack(map_rows);
  g.mode_agent.descriptors = pack(agent_rows);
  g.mode_mode.descriptors = Matrix<double>::Zero(1, 4);  // same agent, same frame

  bool all_futures = true;
  for (Index j : g.target_agents) {
    const auto& f = scene.agents[static_cast<std::size_t>(g.decoder_agents[static_cast<std::size_t>(j)])].future_gt;
    all_futures = all_futures && f.has_value() && static_cast<int>(f->size()) == cfg.horizon;
  }
  if (all_futures) {
    g.future_local.resize(g.num_targets(), 2 * cfg.horizon);
    for (Index j = 0; j < g.num_targets(); ++j) {
      const Index i = g.target_agents[static_cast<std::size_t>(j)];
      const LocalFrame& f = g.current_frames[static_cast<std::size_t>(i)];
      const auto& fut = *scene.agents[static_cast<std::size_t>(g.decoder_agents[static_cast<std::size_t>(i)])].future_gt;
      for (int t = 0; t < cfg.horizon; ++t) {
        const Point2 p = to_local(f, fut[static_cast<std::size_t>(t)]);
        g.future_local(j, 2 * t) = p.x();
        g.future_local(j, 2 * t + 1) = p.y();
      }
    }
  }
  return g;
}

}  // namespace jointcast
