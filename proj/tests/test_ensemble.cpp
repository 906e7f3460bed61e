#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

PredictionEntry member(const std::string& id, int K, int A, int T, Rng& rng, double spread) {
  PredictionEntry p;
  p.scenario_id = id;
  double total = 0.0;
  for (int k = 0; k < K; ++k) total += p.pi.emplace_back(rng.uniform(0.1, 1.0));
  for (double& v : p.pi) v /= total;
  for (int i = 0; i < A; ++i) p.agent_ids.push_back(i + 1);
  for (int k = 0; k < K; ++k) {
    std::vector<Trajectory> world;
    for (int i = 0; i < A; ++i) {
      Trajectory tr;
      const Point2 dir(rng.uniform(-spread, spread), rng.uniform(-spread, spread));
      for (int t = 1; t <= T; ++t) tr.push_back(Point2(i * 10.0, 0) + dir * t);
      world.push_back(tr);
    }
    p.modes.push_back(world);
  }
  return p;
}

}  // namespace

TEST_CASE("k-means examples") {
  SUBCASE("symmetric clusters") {
    Matrix<double> x(4, 2);
    x << 0, 0, 0, 1, 10, 0, 10, 1;
    const KMeansResult r = weighted_kmeans(x, {1, 1, 1, 1}, 2, 50, 3);
    Matrix<double> c = r.centroids;
    if (c(0, 0) > c(1, 0)) c.row(0).swap(c.row(1));
    CHECK(c(0, 0) == 0.0);
    CHECK(c(0, 1) == 0.5);
    CHECK(c(1, 0) == 10.0);
    CHECK(c(1, 1) == 0.5);
  }
  SUBCASE("weighted mean") {
    Matrix<double> x(2, 1);
    x << 0, 1;
    CHECK(weighted_kmeans(x, {3, 1}, 1, 10, 0).centroids(0, 0) == 0.25);
  }
  SUBCASE("input errors") {
    const Matrix<double> x = Matrix<double>::Zero(2, 2);
    CHECK_THROWS_AS(weighted_kmeans(x, {1, 1}, 3, 10, 0), InputError);
    CHECK_THROWS_AS(weighted_kmeans(x, {1, 0}, 1, 10, 0), InputError);
    CHECK_THROWS_AS(weighted_kmeans(x, {1, 1}, 1, 0, 0), InputError);
  }
}

// Lloyd stops at a local optimum: every point sits with its nearest centroid
// and every centroid is the weighted mean of its cluster.
static void check_lloyd_fixpoint(const Matrix<double>& x, const std::vector<double>& w, const KMeansResult& r) {
  const Index k = r.centroids.rows();
  Matrix<double> sums = Matrix<double>::Zero(k, x.cols());
  std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < x.rows(); ++i) {
    const int a = r.assignments[static_cast<std::size_t>(i)];
    const double own = (x.row(i) - r.centroids.row(a)).squaredNorm();
    for (Index c = 0; c < k; ++c) CHECK(own <= (x.row(i) - r.centroids.row(c)).squaredNorm() + 1e-12);
    sums.row(a) += w[static_cast<std::size_t>(i)] * x.row(i);
    mass[static_cast<std::size_t>(a)] += w[static_cast<std::size_t>(i)];
  }
  for (Index c = 0; c < k; ++c) {
    REQUIRE(mass[static_cast<std::size_t>(c)] > 0.0);
    CHECK((sums.row(c) / mass[static_cast<std::size_t>(c)] - r.centroids.row(c)).norm() < 1e-12);
  }
}

TEST_CASE("k-means against the best partition") {
  Rng rng(1);
  SUBCASE("unstructured points reach a local optimum") {
    for (int trial = 0; trial < 200; ++trial) {
      const Index n = rng.uniform_int(2, 8);
      const Matrix<double> x = random_matrix(n, 2, rng, -5, 5);
      std::vector<double> w;
      for (Index i = 0; i < n; ++i) w.push_back(rng.uniform(0.1, 2.0));
      const KMeansResult r = weighted_kmeans(x, w, 2, 100, static_cast<std::uint64_t>(trial));
      CHECK(weighted_cost(x, w, r.assignments, r.centroids) >= best_partition_cost(x, w, 2) - 1e-9);
      check_lloyd_fixpoint(x, w, r);
      for (std::size_t i = 1; i < r.cost_history.size(); ++i) CHECK(r.cost_history[i] <= r.cost_history[i - 1] + 1e-12);
      const KMeansResult again = weighted_kmeans(x, w, 2, 100, static_cast<std::uint64_t>(trial));
      CHECK(again.assignments == r.assignments);
      CHECK(again.centroids == r.centroids);
    }
  }
  SUBCASE("separated blobs reach the best partition") {
    for (int trial = 0; trial < 200; ++trial) {
      const Index n = rng.uniform_int(2, 8);
      Matrix<double> x = random_matrix(n, 2, rng, -1, 1);
      x(0, 0) += 20.0;
      for (Index i = 2; i < n; ++i) {
        if (rng.uniform() < 0.5) x(i, 0) += 20.0;
      }
      std::vector<double> w;
      for (Index i = 0; i < n; ++i) w.push_back(rng.uniform(0.1, 2.0));
      const KMeansResult r = weighted_kmeans(x, w, 2, 100, static_cast<std::uint64_t>(trial));
      CHECK(weighted_cost(x, w, r.assignments, r.centroids) == doctest::Approx(best_partition_cost(x, w, 2)).epsilon(1e-12));
      check_lloyd_fixpoint(x, w, r);
    }
  }
}

TEST_CASE("ensembling identical members") {
  Rng rng(2);
  PredictionEntry one = member("s", 1, 2, 5, rng, 1.0);
  one.pi = {1.0};
  std::vector<PredictionEntry> members(8, one);
  for (auto& m : members) {
    m.modes.assign(6, one.modes[0]);
    m.pi.assign(6, 1.0 / 6);
  }
  const PredictionEntry e = ensemble_scene(members, {6, 50, 7, true});
  CHECK(e.num_modes() == 6);
  double total = 0.0;
  for (std::size_t k = 0; k < 6; ++k) {
    total += e.pi[k];
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t t = 0; t < 5; ++t) CHECK((e.modes[k][i][t] - one.modes[0][i][t]).norm() < 1e-12);
    }
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("eight members of six worlds give six worlds") {
  Rng rng(3);
  std::vector<PredictionEntry> members;
  for (int m = 0; m < 8; ++m) members.push_back(member("s", 6, 3, 6, rng, 2.0));
  const PredictionEntry e = ensemble_scene(members);
  CHECK(e.num_modes() == 6);
  CHECK(e.num_agents() == 3);
  CHECK_NOTHROW(validate_prediction(e, 1e-9));
  CHECK(prediction_to_json_line(e) == prediction_to_json_line(ensemble_scene(members)));
}

TEST_CASE("two bundles average to their weighted means") {
  Rng rng(4);
  std::vector<PredictionEntry> members;
  for (int m = 0; m < 3; ++m) {
    PredictionEntry p = member("s", 2, 1, 4, rng, 0.1);
    for (auto& q : p.modes[1][0]) q += Point2(50, 50);
    members.push_back(p);
  }
  const PredictionEntry e = ensemble_scene(members, {2, 50, 1, true});
  for (int bundle = 0; bundle < 2; ++bundle) {
    Trajectory expect(4, Point2::Zero());
    double mass = 0.0, total = 0.0;
    for (const auto& m : members) {
      for (std::size_t t = 0; t < 4; ++t) expect[t] += m.pi[static_cast<std::size_t>(bundle)] * m.modes[static_cast<std::size_t>(bundle)][0][t];
      mass += m.pi[static_cast<std::size_t>(bundle)];
      total += 1.0;
    }
    for (auto& q : expect) q /= mass;
    const std::size_t c = (e.modes[0][0].back() - expect.back()).norm() < 1.0 ? 0 : 1;
    for (std::size_t t = 0; t < 4; ++t) CHECK((e.modes[c][0][t] - expect[t]).norm() < 1e-12);
    CHECK(e.pi[c] == doctest::Approx(mass / total));
  }
}

TEST_CASE("ensembling commutes with rigid motion") {
  Rng rng(5);
  std::vector<PredictionEntry> members;
  for (int m = 0; m < 4; ++m) members.push_back(member("s", 6, 2, 5, rng, 2.0));
  const RigidTransform g{0.9, Point2(-40, 75)};
  std::vector<PredictionEntry> moved = members;
  for (auto& m : moved) {
    for (auto& w : m.modes) {
      for (auto& tr : w) {
        for (auto& q : tr) q = g.apply(q);
      }
    }
  }
  const PredictionEntry a = ensemble_scene(members), b = ensemble_scene(moved);
  double worst = 0.0;
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(std::abs(a.pi[k] - b.pi[k]) < 1e-12);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t t = 0; t < 5; ++t) worst = std::max(worst, (g.apply(a.modes[k][i][t]) - b.modes[k][i][t]).norm());
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("misaligned members are rejected") {
  Rng rng(6);
  std::vector<PredictionEntry> members{member("s", 6, 2, 5, rng, 1.0), member("s", 6, 2, 5, rng, 1.0)};
  members[1].agent_ids[1] = 99;
  CHECK_THROWS_AS(ensemble_scene(members), ValidationError);
  members[1] = member("t", 6, 2, 5, rng, 1.0);
  CHECK_THROWS_AS(ensemble_scene(members), ValidationError);
}
