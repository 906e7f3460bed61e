#include "jointcast/model/objective.hpp"

#include <limits>
#include <numbers>

namespace jointcast {

double laplace_nll(const Matrix<double>& x, const Matrix<double>& mu, const Matrix<double>& b) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols() || b.rows() != mu.rows() || b.cols() != mu.cols()) {
    throw DimensionError("laplace_nll: shapes differ");
  }
  if (!(b.array() > 0.0).all()) throw DomainError("laplace_nll: scale must be positive");
  // log(2b) split so that b = 1 contributes exactly count * ln 2.
  return static_cast<double>(x.size()) * std::numbers::ln2 + b.array().log().sum() +
         ((x - mu).array().abs() / b.array()).sum();
}

int select_winner(const Matrix<double>& trajectories, const Matrix<double>& gt) {
  const Index a = gt.rows();
  if (a == 0 || trajectories.cols() != gt.cols() || trajectories.rows() % a != 0 || gt.cols() % 2 != 0) {
    throw DimensionError("select_winner: trajectories do not match ground truth");
  }
  const Index modes = trajectories.rows() / a;
  const Index steps = gt.cols() / 2;
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < modes; ++k) {
    double err = 0.0;
    for (Index j = 0; j < a; ++j) {
      for (Index t = 0; t < steps; ++t) {
        err += std::hypot(trajectories(k * a + j, 2 * t) - gt(j, 2 * t), trajectories(k * a + j, 2 * t + 1) - gt(j, 2 * t + 1));
      }
    }
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace jointcast
