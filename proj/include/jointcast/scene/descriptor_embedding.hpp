#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "jointcast/core/layers.hpp"
#include "jointcast/model/config.hpp"
#include "jointcast/scene/scene.hpp"

namespace jointcast {

/// Packs descriptors as rows [distance, bearing, heading_diff, time_diff].
inline Matrix<double> descriptor_matrix(const std::vector<RelDescriptor>& ds) {
  Matrix<double> m(static_cast<Index>(ds.size()), 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.row(static_cast<Index>(i)) << ds[i].distance, ds[i].bearing, ds[i].heading_diff, ds[i].time_diff;
  }
  return m;
}

/// Fourier features of descriptor rows.
///
/// distance: d/50 and sin/cos(2 pi d / P) for periods log-spaced in [2, 200] m
/// bearing, heading_diff: sin/cos(h * angle) for harmonics h = 1, 2, 4, ...
/// time_diff: tau/5 and sin/cos(2 pi tau / P) for periods log-spaced in [0.5, 10] s
template <typename Scalar>
Var<Scalar> fourier_features(const Var<Scalar>& desc, const ModelConfig& cfg) {
  if (desc.cols() != 4) throw DimensionError("fourier_features: descriptors must have 4 columns");
  const Index F = cfg.descriptor_features();
  struct Term {
    int column;
    double omega;  // 0 marks a raw (linear) term scaled by `scale`
    double scale;
  };
  std::vector<Term> terms;
  auto log_spaced = [](double lo, double hi, int n, int i) {
    return n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  };
  terms.push_back({0, 0.0, 1.0 / 50.0});
  for (int i = 0; i < cfg.distance_frequencies; ++i) {
    terms.push_back({0, 2.0 * std::numbers::pi / log_spaced(2.0, 200.0, cfg.distance_frequencies, i), 0.0});
  }
  for (int col : {1, 2}) {
    for (int i = 0; i < cfg.angle_harmonics; ++i) terms.push_back({col, static_cast<double>(1 << i), 0.0});
  }
  terms.push_back({3, 0.0, 1.0 / 5.0});
  for (int i = 0; i < cfg.time_frequencies; ++i) {
    terms.push_back({3, 2.0 * std::numbers::pi / log_spaced(0.5, 10.0, cfg.time_frequencies, i), 0.0});
  }

  const Matrix<Scalar>& x = desc.value();
  Matrix<Scalar> out(x.rows(), F);
  for (Index r = 0; r < x.rows(); ++r) {
    Index c = 0;
    for (const Term& t : terms) {
      const Scalar v = x(r, t.column);
      if (t.omega == 0.0) {
        out(r, c++) = v * static_cast<Scalar>(t.scale);
      } else {
        const Scalar w = static_cast<Scalar>(t.omega);
        out(r, c++) = std::sin(w * v);
        out(r, c++) = std::cos(w * v);
      }
    }
  }
  const int id = desc.id;
  return desc.tape->record(std::move(out), desc.tape->requires_grad(desc), [id, terms](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    const Matrix<Scalar>& xv = t.value(id);
    Matrix<Scalar>& gx = t.grad(id);
    for (Index r = 0; r < g.rows(); ++r) {
      Index c = 0;
      for (const Term& term : terms) {
        const Scalar v = xv(r, term.column);
        if (term.omega == 0.0) {
          gx(r, term.column) += g(r, c++) * static_cast<Scalar>(term.scale);
        } else {
          const Scalar w = static_cast<Scalar>(term.omega);
          gx(r, term.column) += g(r, c) * w * std::cos(w * v) - g(r, c + 1) * w * std::sin(w * v);
          c += 2;
        }
      }
    }
  });
}

template <typename Scalar>
void declare_descriptor_embedding(ParameterStore<Scalar>& store, const std::string& prefix, const ModelConfig& cfg) {
  declare_mlp(store, prefix, cfg.descriptor_features(), {cfg.hidden, cfg.hidden});
}

/// Relative-position embedding: MLP over the Fourier features of each descriptor row.
template <typename Scalar>
Var<Scalar> embed_descriptor(const Context<Scalar>& ctx, const Var<Scalar>& desc, const std::string& prefix,
                             const ModelConfig& cfg) {
  return mlp(ctx, fourier_features(desc, cfg), prefix);
}

template <typename Scalar>
Var<Scalar> embed_descriptor(const Context<Scalar>& ctx, const Matrix<double>& desc, const std::string& prefix,
                             const ModelConfig& cfg) {
  return embed_descriptor(ctx, ctx.constant(desc.cast<Scalar>()), prefix, cfg);
}

}  // namespace jointcast
