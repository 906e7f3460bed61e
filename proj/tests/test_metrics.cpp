#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

PredictionEntry single_agent(const std::vector<Point2>& endpoints, std::vector<double> pi) {
  PredictionEntry p;
  p.scenario_id = "s";
  p.pi = std::move(pi);
  p.agent_ids = {1};
  for (const Point2& e : endpoints) p.modes.push_back({{e}});
  return p;
}

PredictionEntry moved(PredictionEntry p, const RigidTransform& g) {
  for (auto& w : p.modes) {
    for (auto& tr : w) {
      for (auto& q : tr) q = g.apply(q);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("3-4-5 example") {
  const PredictionEntry p = single_agent({Point2(3, 4), Point2(0, 1)}, {0.3, 0.7});
  const GroundTruth gt{{1, {Point2(0, 0)}}};
  const ScenarioMetrics m = scenario_metrics(p, gt);
  CHECK(m.best_world == 1);
  CHECK(m.avg_min_fde_k == 1.0);
  CHECK(m.avg_brier_min_fde_k == doctest::Approx(1.09).epsilon(1e-15));
  CHECK(m.avg_min_fde_1 == 1.0);
  CHECK(m.actor_mr_k == 0.0);
}

TEST_CASE("perfect world with full confidence") {
  Rng rng(1);
  auto [p, gt] = random_instance(rng, 3, 2, 5);
  for (std::size_t i = 0; i < 2; ++i) p.modes[1][i] = gt.at(p.agent_ids[i]);
  p.pi = {0.0, 1.0, 0.0};
  const ScenarioMetrics m = scenario_metrics(p, gt);
  CHECK(m.avg_min_fde_k == 0.0);
  CHECK(m.avg_min_ade_k == 0.0);
  CHECK(m.avg_brier_min_fde_k == 0.0);
  CHECK(m.actor_mr_k == 0.0);
}

TEST_CASE("coincident agents collide") {
  Rng rng(2);
  auto [p, gt] = random_instance(rng, 2, 3, 4);
  for (std::size_t k = 0; k < 2; ++k) {
    for (auto& tr : p.modes[k]) {
      for (std::size_t t = 0; t < tr.size(); ++t) tr[t] = Point2(100.0 * static_cast<double>(&tr - &p.modes[k][0]), t);
    }
    p.modes[k][1][2] = p.modes[k][0][2];
  }
  const ScenarioMetrics m = scenario_metrics(p, gt);
  CHECK(m.actor_cr_k == doctest::Approx(2.0 / 3.0));
  p.modes[0][2][3] = p.modes[0][0][3];
  p.modes[1][2][3] = p.modes[1][0][3];
  CHECK(scenario_metrics(p, gt).actor_cr_k == 1.0);
}

TEST_CASE("metrics match brute-force enumeration") {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    auto [p, gt] = random_instance(rng, static_cast<int>(rng.uniform_int(1, 6)), static_cast<int>(rng.uniform_int(1, 4)),
                                   static_cast<int>(rng.uniform_int(1, 8)));
    const ScenarioMetrics m = scenario_metrics(p, gt), b = brute_force_metrics(p, gt);
    worst = std::max(worst, metric_gap(m, b));
    CHECK(m.avg_brier_min_fde_k == m.avg_min_fde_k + (1.0 - p.pi[static_cast<std::size_t>(m.best_world)]) *
                                                          (1.0 - p.pi[static_cast<std::size_t>(m.best_world)]));
    CHECK(m.avg_brier_min_fde_k >= m.avg_min_fde_k);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("single-target scenarios agree across formulations") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto [p, gt] = random_instance(rng, 6, 1, 6);
    const ScenarioMetrics m = scenario_metrics(p, gt);
    CHECK(m.min_fde_k == m.avg_min_fde_k);
    CHECK(m.min_ade_k == m.avg_min_ade_k);
    CHECK(m.mr_k == m.actor_mr_k);
    CHECK(m.b_min_fde_k == m.avg_brier_min_fde_k);
  }
}

TEST_CASE("identical modes") {
  Rng rng(5);
  auto [p, gt] = random_instance(rng, 4, 2, 5);
  for (auto& w : p.modes) w = p.modes[0];
  const ScenarioMetrics m = scenario_metrics(p, gt), one = brute_force_metrics(p, gt);
  CHECK(m.min_fde_k == doctest::Approx(one.avg_min_fde_k));
  CHECK(m.best_world == 0);
}

TEST_CASE("metrics are invariant to rigid motion") {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [p, gt] = random_instance(rng, 6, 3, 6);
    const RigidTransform g{rng.uniform(-3, 3), Point2(rng.uniform(-100, 100), rng.uniform(-100, 100))};
    GroundTruth gt2;
    for (auto& [id, tr] : gt) {
      Trajectory t2;
      for (const auto& q : tr) t2.push_back(g.apply(q));
      gt2[id] = t2;
    }
    worst = std::max(worst, metric_gap(scenario_metrics(p, gt), scenario_metrics(moved(p, g), gt2)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("pushing predictions away never lowers avgMinFDE") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto [p, gt] = random_instance(rng, 4, 2, 4);
    PredictionEntry far = p;
    for (auto& w : far.modes) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const Trajectory& g = gt.at(p.agent_ids[i]);
        for (std::size_t t = 0; t < w[i].size(); ++t) w[i][t] = g[t] + 1.5 * (w[i][t] - g[t]);
      }
    }
    CHECK(scenario_metrics(far, gt).avg_min_fde_k >= scenario_metrics(p, gt).avg_min_fde_k);
  }
}

TEST_CASE("unnormalized pi is rejected") {
  const PredictionEntry p = single_agent({Point2(1, 1), Point2(0, 1)}, {0.3, 0.6});
  CHECK_THROWS_AS(scenario_metrics(p, {{1, {Point2(0, 0)}}}), ValidationError);
}

TEST_CASE("report and CSV") {
  Rng rng(8);
  std::vector<PredictionEntry> preds;
  std::map<std::string, GroundTruth> truth;
  for (int s = 0; s < 3; ++s) {
    auto [p, gt] = random_instance(rng, 3, s + 1, 4);
    p.scenario_id = "scn" + std::to_string(s);
    preds.push_back(p);
    truth[p.scenario_id] = gt;
  }
  const MetricReport r = evaluate(preds, truth);
  CHECK(r.rows.size() == 3);
  // Actor-weighted: 1 + 2 + 3 actors.
  double mr = 0.0;
  for (const auto& row : r.rows) mr += row.actor_mr_k * row.num_agents;
  CHECK(r.aggregate.actor_mr_k == doctest::Approx(mr / 6));
  CHECK(r.aggregate.avg_min_fde_k ==
        doctest::Approx((r.rows[0].avg_min_fde_k + r.rows[1].avg_min_fde_k + r.rows[2].avg_min_fde_k) / 3));

  const std::string csv = metrics_csv(r);
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] ==
        "scenario_id,avgMinFDE_K,avgMinFDE_1,avgMinADE_K,avgMinADE_1,actorMR_K,avgBrierMinFDE_K,actorCR_K,minFDE_K,"
        "minADE_K,MR_K,b-minFDE_K");
  CHECK(lines[4].rfind("aggregate,", 0) == 0);
  CHECK(std::count(lines[1].begin(), lines[1].end(), ',') == 11);

  MetricReport quoted = r;
  quoted.rows[0].scenario_id = "a,b \"c\"";
  const std::string qcsv = metrics_csv(quoted);
  CHECK(qcsv.find("\n\"a,b \"\"c\"\"\",") != std::string::npos);

  truth["extra"] = truth["scn0"];
  try {
    evaluate(preds, truth);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("extra") != std::string::npos);
  }
}
