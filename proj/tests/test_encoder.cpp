#include <numbers>

#include "doctest.h"
#include "jointcast/model/encoder.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

struct Encoded {
  Matrix<double> map, agent;
  std::map<std::string, int> counters;
};

struct Encoder {
  ModelConfig cfg = small_config();
  ParameterStore<double> store{21};
  Encoder() {
    declare_encoder_parameters(store, cfg);
    jitter_parameters(store, 22, 0.1);
  }
  Encoded run(const Scene& s) {
    const SceneGeometry g = build_scene_geometry(s, cfg);
    Encoded e;
    Tape<double> tape(&store);
    Context<double> ctx{&tape, false, 0.0, nullptr, &e.counters};
    const SceneEncoding<double> enc = encode_scene(ctx, g, cfg);
    e.map = enc.map_enc.value();
    e.agent = enc.agent_enc.value();
    return e;
  }
};

double rel_dev(const Matrix<double>& a, const Matrix<double>& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
}

AgentTrack straight_agent(std::int64_t id, Point2 start, double heading, double speed, int steps) {
  AgentTrack a;
  a.id = id;
  a.is_target = true;
  const Point2 dir(std::cos(heading), std::sin(heading));
  for (int t = 0; t < steps; ++t) {
    a.positions.push_back(start + speed * kStepSeconds * t * dir);
    a.headings.push_back(heading);
    a.timestamps.push_back(kStepSeconds * t);
    a.valid.push_back(1);
  }
  return a;
}

MapPolygon straight_lane(std::int64_t id, Point2 from, Point2 to) {
  MapPolygon p;
  p.id = id;
  const double h = wrap_angle(std::atan2(to.y() - from.y(), to.x() - from.x()));
  for (int i = 0; i <= 4; ++i) {
    p.points.push_back(from + (to - from) * (i / 4.0));
    p.headings.push_back(h);
  }
  return p;
}

}  // namespace

TEST_CASE("encoder shapes, determinism and counters") {
  Encoder enc;
  const Scene s = small_scene(1, enc.cfg);
  const Encoded a = enc.run(s), b = enc.run(s);
  CHECK(a.map.rows() == static_cast<Index>(s.polygons.size()));
  CHECK(a.agent.rows() == static_cast<Index>(s.agents.size()) * enc.cfg.history_steps);
  CHECK(a.agent.cols() == enc.cfg.hidden);
  CHECK(a.agent.allFinite());
  CHECK(a.agent == b.agent);
  CHECK(a.map == b.map);

  enc.cfg.encoder_layers = 2;
  ParameterStore<double> two(5);
  declare_encoder_parameters(two, enc.cfg);
  std::swap(enc.store, two);
  const Encoded c = enc.run(s);
  for (const char* k : {"encoder.map_map", "encoder.temporal", "encoder.agent_map", "encoder.social"}) {
    CHECK(c.counters.at(k) == 2);
  }
}

TEST_CASE("encode_scene composes the two stages") {
  Encoder enc;
  const Scene s = small_scene(2, enc.cfg);
  const SceneGeometry g = build_scene_geometry(s, enc.cfg);
  Tape<double> tape(&enc.store);
  Context<double> ctx{&tape};
  const Var<double> map = encode_map(ctx, g, enc.cfg);
  const Var<double> agent = encode_agents(ctx, g, map, enc.cfg);
  const Encoded e = enc.run(s);
  CHECK(map.value() == e.map);
  CHECK(agent.value() == e.agent);
  CHECK_THROWS_AS(encode_agents(ctx, g, ctx.constant(Matrix<double>::Zero(map.rows() + 1, enc.cfg.hidden)), enc.cfg),
                  DimensionError);
}

TEST_CASE("single polygon and single static agent") {
  Encoder enc;
  Scene s;
  s.scenario_id = "one";
  s.horizon = enc.cfg.horizon;
  s.polygons.push_back(straight_lane(0, Point2(0, 0), Point2(20, 0)));
  s.agents.push_back(straight_agent(1, Point2(3, 0), 0.0, 0.0, enc.cfg.history_steps));
  const Encoded a = enc.run(s), b = enc.run(s);
  CHECK(a.map.rows() == 1);
  CHECK(a.map.allFinite());
  CHECK(a.agent.allFinite());
  CHECK(a.agent == b.agent);
}

TEST_CASE("encoder is invariant to rigid motion and time shift") {
  Encoder enc;
  Rng rng(3);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = small_scene(seed, enc.cfg);
    const RigidTransform g{rng.uniform(-std::numbers::pi, std::numbers::pi),
                           Point2(rng.uniform(-70, 70), rng.uniform(-70, 70))};
    const Encoded a = enc.run(s), b = enc.run(transform_scene(s, g, rng.uniform(0, 1000)));
    worst = std::max({worst, rel_dev(a.map, b.map), rel_dev(a.agent, b.agent)});
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("encoder is permutation equivariant, exactly") {
  Encoder enc;
  const Scene s = small_scene(6, enc.cfg, 6);
  const Index T = enc.cfg.history_steps;
  std::vector<std::size_t> ao(s.agents.size()), po(s.polygons.size());
  for (std::size_t i = 0; i < ao.size(); ++i) ao[i] = (i + 2) % ao.size();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = po.size() - 1 - i;
  const Encoded a = enc.run(s), b = enc.run(permute_scene(s, ao, po));
  for (std::size_t i = 0; i < po.size(); ++i) CHECK(b.map.row(static_cast<Index>(i)) == a.map.row(static_cast<Index>(po[i])));
  for (std::size_t i = 0; i < ao.size(); ++i) {
    CHECK(b.agent.middleRows(static_cast<Index>(i) * T, T) == a.agent.middleRows(static_cast<Index>(ao[i]) * T, T));
  }
}

TEST_CASE("agent encoding is causal") {
  Encoder enc;
  const Scene s = small_scene(7, enc.cfg);
  const Index T = enc.cfg.history_steps;
  const Index t = 5;
  Scene moved = s;
  for (auto& a : moved.agents) {
    a.positions[static_cast<std::size_t>(t)] += Point2(0.7, -0.4);
    a.headings[static_cast<std::size_t>(t)] = wrap_angle(a.headings[static_cast<std::size_t>(t)] + 0.3);
  }
  const Encoded a = enc.run(s), b = enc.run(moved);
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const Index base = static_cast<Index>(i) * T;
    CHECK(a.agent.middleRows(base, t) == b.agent.middleRows(base, t));
    if (s.agents[i].valid[static_cast<std::size_t>(t)]) CHECK(a.agent.row(base + t) != b.agent.row(base + t));
  }
}

TEST_CASE("point-symmetric scene gives equal encodings to symmetric agents") {
  // Two lanes and two agents, each the 180 degree rotation of the other about the origin.
  Encoder enc;
  const int T = enc.cfg.history_steps;
  Scene s;
  s.scenario_id = "sym";
  s.horizon = enc.cfg.horizon;
  s.polygons.push_back(straight_lane(0, Point2(-20, 5), Point2(20, 5)));
  s.polygons.push_back(straight_lane(1, Point2(20, -5), Point2(-20, -5)));
  s.agents.push_back(straight_agent(1, Point2(-10, 5), 0.0, 6.0, T));
  s.agents.push_back(straight_agent(2, Point2(10, -5), std::numbers::pi, 6.0, T));
  const Encoded e = enc.run(s);
  CHECK(rel_dev(e.map.row(0), e.map.row(1)) < 1e-9);
  CHECK(rel_dev(e.agent.topRows(T), e.agent.bottomRows(T)) < 1e-9);
}

TEST_CASE("encoder requires a map") {
  Encoder enc;
  Scene s = small_scene(1, enc.cfg);
  s.polygons.clear();
  ModelConfig cfg = enc.cfg;
  CHECK_THROWS_AS(enc.run(s), Error);
}
