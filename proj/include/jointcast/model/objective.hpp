#pragma once

#include <numbers>

#include "jointcast/core/ops.hpp"
#include "jointcast/model/decoder.hpp"
#include "jointcast/model/scoring.hpp"

namespace jointcast {

/// Per-term losses of one scene; total = l_propose + l_refine + l_cls.
struct LossBreakdown {
  double l_propose = 0.0;
  double l_refine = 0.0;
  double l_cls = 0.0;
  double total = 0.0;
  int winner_index = 0;
};

/// Sum over entries of log(2b) + |x - mu| / b. Throws DomainError unless b > 0.
double laplace_nll(const Matrix<double>& x, const Matrix<double>& mu, const Matrix<double>& b);

/// Differentiable in mu and b; x is data.
template <typename Scalar>
Var<Scalar> laplace_nll(const Matrix<Scalar>& x, const Var<Scalar>& mu, const Var<Scalar>& b) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols()) throw DimensionError("laplace_nll: x and mu shapes differ");
  detail::require_same_shape(mu, b, "laplace_nll");
  const Matrix<Scalar>& m = mu.value();
  const Matrix<Scalar>& s = b.value();
  if (!(s.array() > Scalar(0)).all()) throw DomainError("laplace_nll: scale must be positive");
  Matrix<Scalar> out(1, 1);
  // log(2b) split so that b = 1 contributes exactly count * ln 2.
  out(0, 0) = static_cast<Scalar>(x.size()) * std::numbers::ln2_v<Scalar> + s.array().log().sum() +
              ((x - m).array().abs() / s.array()).sum();
  const int im = mu.id, ib = b.id;
  return mu.tape->record(std::move(out), detail::any_requires_grad({mu, b}), [x, im, ib](Tape<Scalar>& t, int self) {
    const Scalar g = t.grad(self)(0, 0);
    const auto r = (x - t.value(im)).array();
    const auto bs = t.value(ib).array();
    if (t.requires_grad(im)) t.grad(im).array() -= g * r.sign() / bs;
    if (t.requires_grad(ib)) t.grad(ib).array() += g * (Scalar(1) / bs - r.abs() / bs.square());
  });
}

/// argmin_k of the summed L2 displacement between mode k and gt. Trajectory
/// rows are mode-major (k*agents + j) with columns x0 y0 x1 y1 ...; ties go to
/// the smallest k.
int select_winner(const Matrix<double>& trajectories, const Matrix<double>& gt);

/// -log sum_k pi_k prod f(gt | mu_k, b_k), evaluated in log space. Only
/// log_pi is differentiable; throws NumericError when every component
/// likelihood underflows to zero in log space.
template <typename Scalar>
Var<Scalar> mixture_nll(const Var<Scalar>& log_pi, const Matrix<double>& mu, const Matrix<double>& b,
                        const Matrix<double>& gt) {
  const Index k = log_pi.rows();
  const Index a = gt.rows();
  if (log_pi.cols() != 1 || mu.rows() != k * a || b.rows() != k * a) {
    throw DimensionError("mixture_nll: expected " + std::to_string(k) + " modes of " + std::to_string(a) + " agents");
  }
  Matrix<Scalar> ll(k, 1);
  for (Index m = 0; m < k; ++m) {
    ll(m, 0) = static_cast<Scalar>(-laplace_nll(gt, mu.middleRows(m * a, a), b.middleRows(m * a, a)));
  }
  Var<Scalar> joint = add(log_pi, log_pi.tape->constant(std::move(ll)));
  return scale(logsumexp(joint), Scalar(-1));
}

template <typename Scalar>
Var<Scalar> wta_regression(const Var<Scalar>& trajectories, const Var<Scalar>& scales, const Matrix<double>& gt,
                           int winner) {
  const Index a = gt.rows();
  std::vector<Index> rows;
  for (Index j = 0; j < a; ++j) rows.push_back(winner * a + j);
  return laplace_nll<Scalar>(gt.cast<Scalar>(), gather_rows(trajectories, rows), gather_rows(scales, rows));
}

template <typename Scalar>
struct SceneLoss {
  Var<Scalar> total;
  LossBreakdown breakdown;
};

/// L = L_propose + L_refine + L_cls with the winner picked on the proposal.
/// gt is in the targets' current frames (SceneGeometry::future_local).
template <typename Scalar>
SceneLoss<Scalar> total_loss(const DecoderOutput<Scalar>& out, const SceneScores<Scalar>& scores,
                             const Matrix<double>& gt) {
  if (gt.rows() == 0) throw ValidationError("total_loss: scene has no ground-truth futures");
  const int winner = select_winner(out.proposal.positions.value().template cast<double>(), gt);
  Var<Scalar> lp = wta_regression(out.proposal.positions, out.proposal.scales, gt, winner);
  Var<Scalar> lr = wta_regression(out.refinement.positions, out.refinement.scales, gt, winner);
  Var<Scalar> lc = mixture_nll(scores.log_pi, detach(out.refinement.positions).value().template cast<double>(),
                               detach(out.refinement.scales).value().template cast<double>(), gt);
  SceneLoss<Scalar> s;
  s.total = add(add(lp, lr), lc);
  s.breakdown.l_propose = static_cast<double>(lp.value()(0, 0));
  s.breakdown.l_refine = static_cast<double>(lr.value()(0, 0));
  s.breakdown.l_cls = static_cast<double>(lc.value()(0, 0));
  s.breakdown.total = static_cast<double>(s.total.value()(0, 0));
  s.breakdown.winner_index = winner;
  if (!std::isfinite(s.breakdown.total)) throw NumericError("total_loss: non-finite loss");
  return s;
}

}  // namespace jointcast
