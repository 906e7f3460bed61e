#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jointcast/core/ops.hpp"

namespace jointcast {

template <typename Scalar>
struct GradcheckResult {
  Scalar max_rel_error = 0;
  Index coordinates = 0;
  std::string worst;  // "<input or parameter>[flat index]"
};

namespace detail {

template <typename Scalar>
void check_eps(Scalar eps) {
  if (!(eps >= Scalar(1e-7) && eps <= Scalar(1e-4))) throw ConfigError("finite_diff_check: eps must lie in [1e-7, 1e-4]");
}

template <typename Scalar>
Scalar finite_scalar(const Var<Scalar>& v) {
  if (v.rows() != 1 || v.cols() != 1) throw DimensionError("finite_diff_check: function must be scalar-valued");
  const Scalar s = v.value()(0, 0);
  if (!std::isfinite(s)) throw NumericError("finite_diff_check: function value is not finite");
  return s;
}

template <typename Scalar>
void update(GradcheckResult<Scalar>& r, Scalar analytic, Scalar central, const std::string& where) {
  const Scalar err = std::abs(analytic - central) / std::max(Scalar(1), std::abs(central));
  ++r.coordinates;
  if (r.worst.empty() || err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst = where;
  }
}

}  // namespace detail

/// Compares reverse-mode gradients of a scalar function against central
/// differences over every coordinate of every input:
///   max_i |analytic_i - central_i| / max(1, |central_i|).
/// detach() outputs are held at their values from the analytic pass, so the
/// reference is the derivative of the stop-gradient surrogate. Parameters
/// from `store`, if given, are held fixed.
template <typename Scalar>
GradcheckResult<Scalar> finite_diff_check(
    const std::function<Var<Scalar>(Tape<Scalar>&, std::span<const Var<Scalar>>)>& f,
    std::vector<Matrix<Scalar>> inputs, Scalar eps, ParameterStore<Scalar>* store = nullptr) {
  detail::check_eps(eps);
  std::vector<Matrix<Scalar>> analytic, stops;
  {
    Tape<Scalar> tape(store);
    tape.record_stops(&stops);
    std::vector<Var<Scalar>> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    Var<Scalar> y = f(tape, vars);
    detail::finite_scalar(y);
    tape.backward(y);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&]() {
    Tape<Scalar> tape(store);
    tape.replay_stops(&stops);
    std::vector<Var<Scalar>> vars;
    for (const auto& m : inputs) vars.push_back(tape.constant(m));
    return detail::finite_scalar(f(tape, vars));
  };
  GradcheckResult<Scalar> r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].size(); ++i) {
      Scalar& x = inputs[k].data()[i];
      const Scalar x0 = x;
      x = x0 + eps;
      const Scalar fp = eval();
      x = x0 - eps;
      const Scalar fm = eval();
      x = x0;
      detail::update(r, analytic[k].data()[i], (fp - fm) / (2 * eps),
                     "input" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

/// Same check against the entries of a ParameterStore. `f` records the scalar
/// on a tape bound to `store`. At most `per_entry` coordinates of each entry
/// are probed (0 = all), chosen by a seeded shuffle.
template <typename Scalar>
GradcheckResult<Scalar> finite_diff_check_store(const std::function<Var<Scalar>(Tape<Scalar>&)>& f,
                                                ParameterStore<Scalar>& store, Scalar eps, Index per_entry = 0,
                                                std::uint64_t seed = 0) {
  detail::check_eps(eps);
  std::vector<Matrix<Scalar>> analytic, stops;
  {
    store.zero_grad();
    Tape<Scalar> tape(&store);
    tape.record_stops(&stops);
    Var<Scalar> y = f(tape);
    detail::finite_scalar(y);
    tape.backward(y);
    for (const auto& e : store.entries()) analytic.push_back(*e.value.grad);
    store.clear_grad();
  }
  auto eval = [&]() {
    Tape<Scalar> tape(&store);
    tape.replay_stops(&stops);
    return detail::finite_scalar(f(tape));
  };
  Rng rng(seed);
  GradcheckResult<Scalar> r;
  for (std::size_t k = 0; k < store.entries().size(); ++k) {
    auto& e = store.entries()[k];
    std::vector<Index> coords(static_cast<std::size_t>(e.value.size()));
    for (Index i = 0; i < e.value.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    if (per_entry > 0 && per_entry < e.value.size()) {
      for (std::size_t i = coords.size() - 1; i > 0; --i) {
        std::swap(coords[i], coords[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
      }
      coords.resize(static_cast<std::size_t>(per_entry));
    }
    for (Index i : coords) {
      Scalar& x = e.value.data.data()[i];
      const Scalar x0 = x;
      x = x0 + eps;
      const Scalar fp = eval();
      x = x0 - eps;
      const Scalar fm = eval();
      x = x0;
      detail::update(r, analytic[k].data()[i], (fp - fm) / (2 * eps), e.name + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

}  // namespace jointcast
