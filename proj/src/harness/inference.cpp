#include <memory>
#include <numbers>

#include "jointcast/harness/harness.hpp"
#include "jointcast/scene/generator.hpp"

namespace jointcast {

namespace {

// One deterministic forward pass with everything the audits compare.
template <typename Scalar>
struct Snapshot {
  SceneGeometry geom;
  std::unique_ptr<Tape<Scalar>> tape;
  ModelOutput<Scalar> out;
  JointPrediction pred;
};

template <typename Scalar>
Snapshot<Scalar> snapshot(ParameterStore<Scalar>& store, const Scene& scene, const ModelConfig& cfg) {
  Snapshot<Scalar> s;
  s.geom = build_scene_geometry(scene, cfg);
  s.tape = std::make_unique<Tape<Scalar>>(&store);
  Context<Scalar> ctx{s.tape.get(), false, 0.0, nullptr, nullptr};
  s.out = run_model(ctx, s.geom, cfg);
  s.pred = to_joint_prediction(scene, s.geom, s.out.decoded, s.out.scores.pi());
  return s;
}

Matrix<double> flatten(const std::vector<std::vector<Trajectory>>& worlds) {
  std::vector<double> v;
  for (const auto& w : worlds) {
    for (const auto& traj : w) {
      for (const auto& p : traj) {
        v.push_back(p.x());
        v.push_back(p.y());
      }
    }
  }
  Matrix<double> m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return m;
}

Matrix<double> row_vector(const std::vector<double>& v) {
  Matrix<double> m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return m;
}

std::vector<std::vector<Trajectory>> transformed(std::vector<std::vector<Trajectory>> worlds, const RigidTransform& g) {
  for (auto& w : worlds) {
    for (auto& traj : w) {
      for (auto& p : traj) p = g.apply(p);
    }
  }
  return worlds;
}

double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

template <typename Scalar>
Matrix<double> value(const Var<Scalar>& v) {
  return v.value().template cast<double>();
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  return p;
}

}  // namespace

template <typename Scalar>
JointPrediction predict_scene(ParameterStore<Scalar>& store, const Scene& scene, const ModelConfig& cfg) {
  return snapshot(store, scene, cfg).pred;
}

std::vector<PredictionEntry> predict(ParameterStore<float>& store, const std::vector<Scene>& scenes,
                                     const ModelConfig& cfg) {
  std::vector<PredictionEntry> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(predict_scene(store, s, cfg).refined);
  return out;
}

PredictionEntry constant_velocity_prediction(const Scene& scene, int modes) {
  PredictionEntry p;
  p.scenario_id = scene.scenario_id;
  p.pi.assign(static_cast<std::size_t>(modes), 1.0 / modes);
  p.modes.assign(static_cast<std::size_t>(modes), {});
  for (const auto& a : scene.agents) {
    if (!a.is_target) continue;
    const std::size_t last = a.history_length() - 1;
    Point2 vel = Point2::Zero();
    for (std::size_t t = last; t > 0; --t) {
      if (a.valid[t - 1]) {
        vel = (a.positions[last] - a.positions[t - 1]) / static_cast<double>(last - (t - 1));
        break;
      }
    }
    Trajectory traj;
    for (int t = 1; t <= scene.horizon; ++t) traj.push_back(a.positions[last] + t * vel);
    p.agent_ids.push_back(a.id);
    for (auto& w : p.modes) w.push_back(traj);
  }
  return p;
}

std::map<std::string, GroundTruth> ground_truth(const std::vector<Scene>& scenes) {
  std::map<std::string, GroundTruth> out;
  for (const auto& s : scenes) {
    GroundTruth& g = out[s.scenario_id];
    for (const auto& a : s.agents) {
      if (!a.is_target) continue;
      if (!a.future_gt) throw ValidationError("scene '" + s.scenario_id + "' target " + std::to_string(a.id) + " has no future");
      g[a.id] = *a.future_gt;
    }
  }
  return out;
}

double relative_deviation(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
}

template <typename Scalar>
InvarianceReport check_invariance(ParameterStore<Scalar>& store, const std::vector<Scene>& scenes,
                                  const ModelConfig& cfg, int trials, std::uint64_t seed) {
  InvarianceReport r;
  Rng rng(seed);
  for (const Scene& scene : scenes) {
    const Snapshot<Scalar> base = snapshot(store, scene, cfg);
    for (int trial = 0; trial < trials; ++trial) {
      ++r.trials;
      RigidTransform g;
      g.theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double radius = 100.0 * std::sqrt(rng.uniform());
      const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
      g.translation = Point2(radius * std::cos(phi), radius * std::sin(phi));
      const double shift = rng.uniform(0.0, 1000.0);
      const Snapshot<Scalar> moved = snapshot(store, transform_scene(scene, g, shift), cfg);
      r.encoder_rigid = std::max({r.encoder_rigid, relative_deviation(value(base.out.encoding.map_enc), value(moved.out.encoding.map_enc)),
                                  relative_deviation(value(base.out.encoding.agent_enc), value(moved.out.encoding.agent_enc))});
      r.decoder_rigid = std::max({r.decoder_rigid,
                                  relative_deviation(flatten(transformed(base.pred.refined.modes, g)), flatten(moved.pred.refined.modes)),
                                  relative_deviation(flatten(transformed(base.pred.proposal, g)), flatten(moved.pred.proposal)),
                                  relative_deviation(flatten(base.pred.scales), flatten(moved.pred.scales))});
      r.scores_rigid = std::max(r.scores_rigid, relative_deviation(row_vector(base.pred.refined.pi), row_vector(moved.pred.refined.pi)));

      const std::vector<std::size_t> agent_order = shuffled(scene.agents.size(), rng);
      const std::vector<std::size_t> polygon_order = shuffled(scene.polygons.size(), rng);
      const Snapshot<Scalar> perm = snapshot(store, permute_scene(scene, agent_order, polygon_order), cfg);
      const Matrix<double> map_base = value(base.out.encoding.map_enc);
      const Matrix<double> agent_base = value(base.out.encoding.agent_enc);
      Matrix<double> map_expect(map_base.rows(), map_base.cols()), agent_expect(agent_base.rows(), agent_base.cols());
      for (std::size_t i = 0; i < polygon_order.size(); ++i) map_expect.row(static_cast<Index>(i)) = map_base.row(static_cast<Index>(polygon_order[i]));
      const Index T = base.geom.num_steps;
      for (std::size_t i = 0; i < agent_order.size(); ++i) {
        agent_expect.middleRows(static_cast<Index>(i) * T, T) = agent_base.middleRows(static_cast<Index>(agent_order[i]) * T, T);
      }
      r.permutation = std::max({r.permutation, max_abs_diff(map_expect, value(perm.out.encoding.map_enc)),
                                max_abs_diff(agent_expect, value(perm.out.encoding.agent_enc)),
                                max_abs_diff(flatten(base.pred.refined.modes), flatten(perm.pred.refined.modes)),
                                max_abs_diff(flatten(base.pred.proposal), flatten(perm.pred.proposal)),
                                max_abs_diff(flatten(base.pred.scales), flatten(perm.pred.scales)),
                                max_abs_diff(row_vector(base.pred.refined.pi), row_vector(perm.pred.refined.pi))});
      if (base.pred.refined.agent_ids != perm.pred.refined.agent_ids) r.permutation = std::numeric_limits<double>::infinity();
    }
  }
  return r;
}

Scene gradcheck_scene(std::uint64_t seed, int history, int horizon) {
  GeneratorConfig g;
  g.min_lanes = g.max_lanes = 2;
  g.min_agents = g.max_agents = 2;
  g.max_agents_per_lane = 1;
  g.history_steps = history;
  g.horizon = horizon;
  g.lane_back = 20.0;
  g.lane_length = 40.0;
  g.crosswalk_probability = 0.0;
  g.static_probability = 0.0;
  g.late_start_probability = 0.0;
  g.dropout_probability = 0.0;
  g.cyclist_probability = g.pedestrian_probability = 0.0;
  return generate_synthetic_scene(seed, g);
}

GradcheckResult<double> model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, Index per_entry) {
  const Scene scene = gradcheck_scene(seed, cfg.history_steps, cfg.horizon);
  const SceneGeometry geom = build_scene_geometry(scene, cfg);
  ParameterStore<double> store(derive_seed(seed, 1));
  declare_model_parameters(store, cfg);
  // Zero-initialized heads and biases would hide whole gradient paths.
  Rng rng(derive_seed(seed, 2));
  for (auto& e : store.entries()) {
    for (Index i = 0; i < e.value.size(); ++i) e.value.data.data()[i] += rng.uniform(-0.05, 0.05);
  }
  auto f = [&](Tape<double>& tape) {
    Context<double> ctx{&tape, false, 0.0, nullptr, nullptr};
    ModelOutput<double> out = run_model(ctx, geom, cfg);
    return total_loss(out.decoded, out.scores, geom.future_local).total;
  };
  return finite_diff_check_store<double>(f, store, 1e-6, per_entry, derive_seed(seed, 3));
}

template JointPrediction predict_scene<float>(ParameterStore<float>&, const Scene&, const ModelConfig&);
template JointPrediction predict_scene<double>(ParameterStore<double>&, const Scene&, const ModelConfig&);
template InvarianceReport check_invariance<float>(ParameterStore<float>&, const std::vector<Scene>&,
                                                  const ModelConfig&, int, std::uint64_t);
template InvarianceReport check_invariance<double>(ParameterStore<double>&, const std::vector<Scene>&,
                                                   const ModelConfig&, int, std::uint64_t);

}  // namespace jointcast
