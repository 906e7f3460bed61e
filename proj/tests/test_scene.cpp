#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "jointcast/scene/descriptor_embedding.hpp"
#include "jointcast/scene/generator.hpp"
#include "jointcast/scene/scene_io.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "jointcast_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

LocalFrame random_frame(Rng& rng) {
  return {Point2(rng.uniform(-50, 50), rng.uniform(-50, 50)), rng.uniform(-3.1, 3.1), rng.uniform(0, 5)};
}

bool same_scene(const Scene& a, const Scene& b) {
  if (a.scenario_id != b.scenario_id || a.horizon != b.horizon || a.polygons.size() != b.polygons.size() ||
      a.agents.size() != b.agents.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.polygons.size(); ++i) {
    const auto &p = a.polygons[i], &q = b.polygons[i];
    if (p.id != q.id || p.kind != q.kind || p.points != q.points || p.headings != q.headings) return false;
  }
  for (std::size_t i = 0; i < a.agents.size(); ++i) {
    const auto &p = a.agents[i], &q = b.agents[i];
    if (p.id != q.id || p.category != q.category || p.positions != q.positions || p.headings != q.headings ||
        p.timestamps != q.timestamps || p.valid != q.valid || p.is_target != q.is_target || p.future_gt != q.future_gt) {
      return false;
    }
  }
  return true;
}

GeneratorConfig quiet_config() {
  GeneratorConfig g;
  g.min_agents = g.max_agents = 1;
  g.min_lanes = g.max_lanes = 1;
  g.arc_probability = 0.0;
  g.accel_noise = 0.0;
  g.late_start_probability = 0.0;
  g.dropout_probability = 0.0;
  g.static_probability = 0.0;
  g.cyclist_probability = g.pedestrian_probability = 0.0;
  return g;
}

}  // namespace

TEST_CASE("rel_descriptor examples") {
  const LocalFrame q{Point2(0, 0), 0.0, 0.0};
  const RelDescriptor self = rel_descriptor(q, q);
  CHECK(self.distance == 0.0);
  CHECK(self.bearing == 0.0);
  CHECK(self.heading_diff == 0.0);
  CHECK(self.time_diff == 0.0);

  const RelDescriptor d = rel_descriptor(q, {Point2(3, 4), std::numbers::pi / 2, 0.5});
  CHECK(d.distance == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(d.bearing == doctest::Approx(std::atan2(4.0, 3.0)).epsilon(1e-15));
  CHECK(d.heading_diff == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  CHECK(d.time_diff == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("rel_descriptor is invariant to rigid motion and time shift") {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const LocalFrame a = random_frame(rng), b = random_frame(rng);
    const RigidTransform g{rng.uniform(-3.1, 3.1), Point2(rng.uniform(-100, 100), rng.uniform(-100, 100))};
    const double shift = rng.uniform(-1000, 1000);
    auto move = [&](const LocalFrame& f) { return LocalFrame{g.apply(f.origin), g.apply_heading(f.heading), f.time + shift}; };
    const RelDescriptor d0 = rel_descriptor(a, b), d1 = rel_descriptor(move(a), move(b));
    worst = std::max({worst, std::abs(d0.distance - d1.distance), std::abs(wrap_angle(d0.bearing - d1.bearing)),
                      std::abs(wrap_angle(d0.heading_diff - d1.heading_diff)), std::abs(d0.time_diff - d1.time_diff)});
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("local frames") {
  Scene s = generate_synthetic_scene(4);
  SUBCASE("agent frames are the agent states") {
    const SceneFrames f = build_local_frames(s);
    const auto& a = s.agents[0];
    CHECK(f.agents[0][3].origin == a.positions[3]);
    CHECK(f.agents[0][3].heading == a.headings[3]);
    CHECK(f.agents[0][3].time == a.timestamps[3]);
  }
  SUBCASE("straight lane frame") {
    MapPolygon p;
    p.points = {Point2(0, 0), Point2(10, 0)};
    p.headings = {0.0, 0.0};
    const LocalFrame f = polygon_frame(p);
    CHECK(f.origin == Point2(0, 0));
    CHECK(f.heading == 0.0);
    CHECK(f.time == 0.0);
    p.points[1] = p.points[0];
    CHECK_THROWS_AS(polygon_frame(p), GeometryError);
  }
  SUBCASE("rigid equivariance") {
    const RigidTransform g{0.7, Point2(12, -30)};
    const SceneFrames f0 = build_local_frames(s), f1 = build_local_frames(transform_scene(s, g));
    for (std::size_t m = 0; m < f0.polygons.size(); ++m) {
      CHECK((g.apply(f0.polygons[m].origin) - f1.polygons[m].origin).norm() < 1e-9);
      CHECK(std::abs(wrap_angle(f0.polygons[m].heading + 0.7 - f1.polygons[m].heading)) < 1e-9);
    }
  }
  SUBCASE("permutation equivariance") {
    std::vector<std::size_t> ao(s.agents.size()), po(s.polygons.size());
    for (std::size_t i = 0; i < ao.size(); ++i) ao[i] = ao.size() - 1 - i;
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = (i + 3) % po.size();
    const SceneFrames f0 = build_local_frames(s), f1 = build_local_frames(permute_scene(s, ao, po));
    for (std::size_t i = 0; i < ao.size(); ++i) CHECK(f1.agents[i].back().origin == f0.agents[ao[i]].back().origin);
    for (std::size_t i = 0; i < po.size(); ++i) CHECK(f1.polygons[i].origin == f0.polygons[po[i]].origin);
  }
}

TEST_CASE("scene validation") {
  Scene s = generate_synthetic_scene(5);
  CHECK_NOTHROW(validate_scene(s, ValidationMode::kTraining));
  SUBCASE("duplicate agent id") {
    s.agents.push_back(s.agents.front());
    CHECK_THROWS_AS(validate_scene(s), ValidationError);
  }
  SUBCASE("no target") {
    for (auto& a : s.agents) a.is_target = false;
    CHECK_THROWS_AS(validate_scene(s), ValidationError);
  }
  SUBCASE("training target without future") {
    s.agents[0].future_gt.reset();
    CHECK_NOTHROW(validate_scene(s, ValidationMode::kInference));
    CHECK_THROWS_AS(validate_scene(s, ValidationMode::kTraining), ValidationError);
  }
  SUBCASE("uneven timestamps") {
    s.agents[0].timestamps[4] += 0.05;
    CHECK_THROWS_AS(validate_scene(s), ValidationError);
  }
}

TEST_CASE("generator is deterministic per seed") {
  CHECK(same_scene(generate_synthetic_scene(7), generate_synthetic_scene(7)));
  CHECK(scene_to_json_line(generate_synthetic_scene(7)) != scene_to_json_line(generate_synthetic_scene(8)));
  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK_NOTHROW(validate_scene(generate_synthetic_scene(seed), ValidationMode::kTraining));
}

TEST_CASE("straight noiseless lane follows closed-form kinematics") {
  const GeneratorConfig g = quiet_config();
  GeneratorTrace trace;
  const Scene s = generate_synthetic_scene(11, g, &trace);
  REQUIRE(s.agents.size() == 1);
  CHECK(s.num_targets() == 1);
  const AgentTrack& a = s.agents[0];
  const double v = trace.initial_speed[0];
  const Point2 dir(std::cos(a.headings[0]), std::sin(a.headings[0]));
  // Spawn is one step before the first history sample.
  const Point2 spawn = a.positions[0] - v * kStepSeconds * dir;
  const Point2 expected = spawn + v * (g.history_steps + g.horizon) * kStepSeconds * dir;
  CHECK((a.future_gt->back() - expected).norm() < 1e-9);
}

TEST_CASE("infeasible generator config") {
  GeneratorConfig g;
  g.min_agents = g.max_agents = 10;
  g.max_lanes = 2;
  g.max_agents_per_lane = 3;
  CHECK_THROWS_AS(generate_synthetic_scene(1, g), ConfigError);
}

TEST_CASE("followers keep their gap in the future") {
  double min_gap = 1e9;
  int pairs = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GeneratorTrace trace;
    const Scene s = generate_synthetic_scene(seed, {}, &trace);
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
      const int l = trace.leader_of_agent[i];
      if (l < 0) continue;
      ++pairs;
      const auto& f = *s.agents[i].future_gt;
      const auto& lead = *s.agents[static_cast<std::size_t>(l)].future_gt;
      for (std::size_t t = 0; t < f.size(); ++t) min_gap = std::min(min_gap, (f[t] - lead[t]).norm());
    }
  }
  CHECK(pairs > 0);
  CHECK(min_gap > 1.0);
}

TEST_CASE("scene files round-trip") {
  SUBCASE("empty") {
    write_scenes({}, scratch("empty.jsonl"));
    CHECK(std::filesystem::file_size(scratch("empty.jsonl")) == 0);
    CHECK(read_scenes(scratch("empty.jsonl")).empty());
  }
  SUBCASE("generated scenes are reproduced exactly") {
    const auto scenes = generate_synthetic_scenes(3, 4);
    write_scenes(scenes, scratch("rt.jsonl"));
    const auto back = read_scenes(scratch("rt.jsonl"), ValidationMode::kTraining);
    REQUIRE(back.size() == scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) CHECK(same_scene(scenes[i], back[i]));
  }
  SUBCASE("training read rejects a target without future") {
    Scene s = generate_synthetic_scene(2);
    s.agents[0].future_gt.reset();
    write_scenes({s}, scratch("nofuture.jsonl"));
    CHECK_NOTHROW(read_scenes(scratch("nofuture.jsonl")));
    CHECK_THROWS_AS(read_scenes(scratch("nofuture.jsonl"), ValidationMode::kTraining), ValidationError);
  }
  SUBCASE("malformed record reports its line") {
    {
      std::ofstream os(scratch("bad.jsonl"));
      os << scene_to_json_line(generate_synthetic_scene(1)) << "\n{\"scenario_id\": 3\n";
    }
    try {
      read_scenes(scratch("bad.jsonl"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
    }
  }
}

TEST_CASE("descriptor embedding") {
  ModelConfig cfg;
  cfg.hidden = 8;
  ParameterStore<double> store(3);
  declare_descriptor_embedding(store, "pe", cfg);
  Rng rng(4);
  for (auto& e : store.entries()) {
    for (Index i = 0; i < e.value.size(); ++i) e.value.data.data()[i] += rng.uniform(-0.2, 0.2);
  }
  Matrix<double> desc = random_matrix(5, 4, rng, -3, 3);
  desc.row(1) = desc.row(3);
  desc.row(4).setZero();
  Tape<double> tape(&store);
  Context<double> ctx{&tape};
  const Matrix<double> e = embed_descriptor(ctx, desc, "pe", cfg).value();
  CHECK(e.cols() == 8);
  CHECK(e.row(1) == e.row(3));

  Tape<double> tape2(&store);
  Context<double> ctx2{&tape2};
  CHECK(embed_descriptor(ctx2, Matrix<double>(desc.row(4)), "pe", cfg).value() == e.row(4));

  auto input_check = gradcheck([&](Tape<double>& t, std::span<const Var<double>> v) {
    Context<double> c{&t};
    return embed_descriptor(c, v[0], "pe", cfg);
  }, {desc}, &store);
  CHECK(input_check < 1e-5);
  auto param_check = finite_diff_check_store<double>(
      [&](Tape<double>& t) {
        Context<double> c{&t};
        return probe(embed_descriptor(c, desc, "pe", cfg));
      },
      store, 1e-6);
  CHECK(param_check.max_rel_error < 1e-5);
}
