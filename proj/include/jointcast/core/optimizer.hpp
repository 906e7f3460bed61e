#pragma once

#include <cmath>
#include <numbers>

#include "jointcast/core/parameter_store.hpp"

namespace jointcast {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW step over every entry: decoupled decay theta *= (1 - lr*wd),
/// then the bias-corrected Adam update. Moments live in the store.
template <typename Scalar>
void optimizer_step(ParameterStore<Scalar>& store, double lr, double wd, const AdamWConfig& cfg = {}) {
  for (const auto& e : store.entries()) {
    if (!e.value.grad) throw StateError("optimizer_step: parameter '" + e.name + "' has no gradient");
  }
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, t));
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar decay = static_cast<Scalar>(1.0 - lr * wd);
  const Scalar slr = static_cast<Scalar>(lr), seps = static_cast<Scalar>(cfg.eps);
  for (auto& e : store.entries()) {
    const Matrix<Scalar>& g = *e.value.grad;
    e.m1 = b1 * e.m1 + (Scalar(1) - b1) * g;
    e.m2 = b2 * e.m2 + (Scalar(1) - b2) * g.cwiseProduct(g);
    e.value.data *= decay;
    e.value.data.array() -= slr * (e.m1.array() / c1) / ((e.m2.array() / c2).sqrt() + seps);
  }
  if (!store.all_finite()) throw NumericError("optimizer_step produced non-finite parameters");
}

/// Cosine annealing from base_lr at epoch 0 to 0 at epoch `total`.
inline double cosine_lr(double base_lr, double epoch, double total) {
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * epoch / total));
}

}  // namespace jointcast
