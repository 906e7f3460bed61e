#include <cmath>
#include <numbers>

#include "doctest.h"
#include "jointcast/model/objective.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

const double kLn2 = std::numbers::ln2;

Matrix<double> tile(const Matrix<double>& gt, Index k) {
  Matrix<double> out(gt.rows() * k, gt.cols());
  for (Index m = 0; m < k; ++m) out.middleRows(m * gt.rows(), gt.rows()) = gt;
  return out;
}

}  // namespace

TEST_CASE("laplace_nll") {
  Rng rng(1);
  const Matrix<double> x = random_matrix(2, 6, rng);
  CHECK(laplace_nll(x, x, Matrix<double>::Constant(2, 6, 0.5)) == 0.0);
  CHECK(laplace_nll(x, x, Matrix<double>::Ones(2, 6)) == doctest::Approx(12 * kLn2).epsilon(1e-15));
  CHECK(12 * kLn2 == doctest::Approx(8.3178).epsilon(1e-5));
  CHECK_THROWS_AS(laplace_nll(x, x, Matrix<double>::Zero(2, 6)), DomainError);

  for (int trial = 0; trial < 50; ++trial) {
    const Matrix<double> xs = random_matrix(3, 8, rng, -5, 5), mu = random_matrix(3, 8, rng, -5, 5);
    const Matrix<double> b = random_matrix(3, 8, rng, 0.1, 3);
    double direct = 0.0;
    for (Index r = 0; r < 3; ++r) {
      for (Index c = 0; c < 8; ++c) direct += std::log(2 * b(r, c)) + std::abs(xs(r, c) - mu(r, c)) / b(r, c);
    }
    CHECK(std::abs(laplace_nll(xs, mu, b) - direct) < 1e-10);
    Tape<double> tape;
    CHECK(laplace_nll<double>(xs, tape.constant(mu), tape.constant(b)).value()(0, 0) == laplace_nll(xs, mu, b));
  }
}

TEST_CASE("select_winner") {
  Matrix<double> gt(2, 6);
  gt << 0, 0, 1, 0, 2, 0, 5, 5, 5, 6, 5, 7;
  SUBCASE("exact mode wins") {
    Matrix<double> traj = tile(gt, 3);
    traj.topRows(2).array() += 1.0;
    traj.bottomRows(2).array() -= 0.5;
    CHECK(select_winner(traj, gt) == 1);
  }
  SUBCASE("constant offsets") {
    Matrix<double> traj = tile(gt, 2);
    for (Index t = 0; t < 3; ++t) {
      traj.block(0, 2 * t, 2, 1).array() += 1.0;
      traj.block(2, 2 * t + 1, 2, 1).array() += 2.0;
    }
    CHECK(select_winner(traj, gt) == 0);
  }
  SUBCASE("ties go to the first mode") { CHECK(select_winner(tile(gt, 4), gt) == 0); }
  SUBCASE("brute force") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const Index a = rng.uniform_int(1, 3), k = rng.uniform_int(1, 6);
      const Matrix<double> g = random_matrix(a, 10, rng, -10, 10), traj = random_matrix(a * k, 10, rng, -10, 10);
      CHECK(select_winner(traj, g) == brute_force_winner(traj, g));
    }
  }
}

TEST_CASE("mixture_nll") {
  Rng rng(3);
  Tape<double> tape;
  SUBCASE("single component reduces to the Laplace NLL") {
    const Matrix<double> gt = random_matrix(1, 2, rng);
    const Var<double> log_pi = tape.constant(Matrix<double>::Zero(1, 1));
    CHECK(mixture_nll(log_pi, gt, Matrix<double>::Ones(1, 2), gt).value()(0, 0) == doctest::Approx(2 * kLn2).epsilon(1e-15));
  }
  SUBCASE("equal components collapse") {
    const Matrix<double> gt = random_matrix(2, 4, rng), mu = random_matrix(2, 4, rng);
    const Matrix<double> b = random_matrix(2, 4, rng, 0.5, 2);
    Matrix<double> half(2, 1);
    half.setConstant(std::log(0.5));
    const double one = mixture_nll(tape.constant(Matrix<double>::Zero(1, 1)), mu, b, gt).value()(0, 0);
    const double two = mixture_nll(tape.constant(half), tile(mu, 2), tile(b, 2), gt).value()(0, 0);
    CHECK(std::abs(one - two) < 1e-12);
  }
  SUBCASE("probability-domain oracle") {
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const Index k = rng.uniform_int(1, 6), a = rng.uniform_int(1, 3), t = rng.uniform_int(1, 5);
      const Matrix<double> gt = random_matrix(a, 2 * t, rng, -2, 2);
      const Matrix<double> mu = random_matrix(a * k, 2 * t, rng, -2, 2), b = random_matrix(a * k, 2 * t, rng, 0.5, 2);
      Matrix<double> logits = random_matrix(k, 1, rng, -2, 2);
      const Matrix<double> log_pi = log_softmax(tape.constant(logits)).value();
      std::vector<double> pi(static_cast<std::size_t>(k));
      for (Index m = 0; m < k; ++m) pi[static_cast<std::size_t>(m)] = std::exp(log_pi(m, 0));
      const double a_val = mixture_nll(tape.constant(log_pi), mu, b, gt).value()(0, 0);
      worst = std::max(worst, std::abs(a_val - probability_domain_nll(pi, mu, b, gt)));
    }
    CHECK(worst <= 1e-8);
  }
  SUBCASE("only log_pi is differentiable") {
    const Matrix<double> gt = random_matrix(2, 4, rng), mu = random_matrix(6, 4, rng), b = random_matrix(6, 4, rng, 0.5, 2);
    const double err = gradcheck([&](Tape<double>& t, std::span<const Var<double>> v) {
      return mixture_nll(log_softmax(v[0]), mu, b, gt);
    }, {random_matrix(3, 1, rng)});
    CHECK(err < 1e-7);
  }
  SUBCASE("every component underflowing is a numeric error") {
    const Matrix<double> gt = Matrix<double>::Constant(1, 2, 1e300);
    CHECK_THROWS_AS(mixture_nll(tape.constant(Matrix<double>::Zero(1, 1)), Matrix<double>::Constant(1, 2, -1e300),
                                Matrix<double>::Constant(1, 2, 1e-300), gt),
                    NumericError);
  }
}

TEST_CASE("winner-take-all regression") {
  Rng rng(4);
  const Matrix<double> gt = random_matrix(2, 6, rng);
  Matrix<double> traj = random_matrix(6, 6, rng);
  traj.middleRows(2, 2) = gt;
  Tape<double> tape;
  const Var<double> scales = tape.constant(Matrix<double>::Constant(6, 6, 0.5));
  CHECK(wta_regression(tape.constant(traj), scales, gt, 1).value()(0, 0) == 0.0);

  const double base = wta_regression(tape.constant(traj), scales, gt, 1).value()(0, 0);
  Matrix<double> moved = traj;
  moved.topRows(2).array() += 3.0;
  moved.bottomRows(2).array() -= 1.0;
  CHECK(wta_regression(tape.constant(moved), scales, gt, 1).value()(0, 0) == base);

  traj.middleRows(2, 2).array() += 0.3;
  const Var<double> v = tape.variable(traj);
  const Var<double> s = tape.variable(Matrix<double>::Constant(6, 6, 0.7));
  tape.backward(wta_regression(v, s, gt, 1));
  CHECK(tape.grad(v).topRows(2).isZero(0.0));
  CHECK(tape.grad(v).bottomRows(2).isZero(0.0));
  CHECK(tape.grad(s).topRows(2).isZero(0.0));
  CHECK(tape.grad(s).bottomRows(2).isZero(0.0));
  CHECK_FALSE(tape.grad(v).middleRows(2, 2).isZero(0.0));
}

TEST_CASE("total loss") {
  Rng rng(5);
  const Matrix<double> gt = random_matrix(2, 6, rng);
  Tape<double> tape;
  DecoderOutput<double> out;
  SceneScores<double> scores;
  scores.logits = tape.constant(random_matrix(3, 1, rng));
  scores.log_pi = log_softmax(scores.logits);

  SUBCASE("perfect prediction leaves only the classification term") {
    out.proposal.positions = out.refinement.positions = tape.constant(tile(gt, 3));
    out.proposal.scales = out.refinement.scales = tape.constant(Matrix<double>::Constant(6, 6, 0.5));
    const SceneLoss<double> l = total_loss(out, scores, gt);
    CHECK(l.breakdown.l_propose == 0.0);
    CHECK(l.breakdown.l_refine == 0.0);
    CHECK(l.breakdown.total == l.breakdown.l_cls);
    // -log sum(pi) = 0 up to the rounding of the softmax.
    CHECK(l.breakdown.l_cls >= -4 * std::numeric_limits<double>::epsilon());
  }
  SUBCASE("total is the exact sum, winner from the proposal") {
    Matrix<double> prop = random_matrix(6, 6, rng);
    prop.bottomRows(2) = gt;
    out.proposal.positions = tape.variable(prop);
    out.refinement.positions = tape.variable(random_matrix(6, 6, rng));
    out.proposal.scales = tape.variable(random_matrix(6, 6, rng, 0.5, 1));
    out.refinement.scales = tape.variable(random_matrix(6, 6, rng, 0.5, 1));
    const SceneLoss<double> l = total_loss(out, scores, gt);
    CHECK(l.breakdown.winner_index == 2);
    CHECK(l.breakdown.total == l.breakdown.l_propose + l.breakdown.l_refine + l.breakdown.l_cls);
    CHECK(l.total.value()(0, 0) == l.breakdown.total);
  }
}
