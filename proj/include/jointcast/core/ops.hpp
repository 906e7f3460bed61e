#pragma once

// Differentiable free functions over Var. Each op computes its forward value
// with Eigen and registers the matching analytic backward.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "jointcast/core/random.hpp"
#include "jointcast/core/tape.hpp"

namespace jointcast {

namespace detail {

template <typename Scalar>
bool any_requires_grad(std::initializer_list<Var<Scalar>> vars) {
  for (const auto& v : vars) {
    if (v.tape->requires_grad(v.id)) return true;
  }
  return false;
}

inline std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": operand shapes " + dims(a.rows(), a.cols()) + " and " +
                         dims(b.rows(), b.cols()) + " differ");
  }
}

inline void check_offsets(std::span<const Index> offsets, Index rows, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows) {
    throw DimensionError(std::string(op) + ": segment offsets do not cover " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] < offsets[i - 1]) throw DimensionError(std::string(op) + ": segment offsets decrease");
  }
}

}  // namespace detail

// Forward products use the coefficient-wise kernel. The blocked GEMM takes a
// different path for rows in a partial panel, so at 32-bit a row's result
// would depend on its position and permuted inputs would not match exactly.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: lhs is " + detail::dims(a.rows(), a.cols()) + ", rhs is " +
                         detail::dims(b.rows(), b.cols()));
  }
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value().lazyProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), detail::any_requires_grad({a, b}), [ia, ib](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

/// x * w + b with b broadcast over rows (b is 1 x Dout).
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("affine: input " + detail::dims(x.rows(), x.cols()) + ", weight " +
                         detail::dims(w.rows(), w.cols()) + ", bias " + detail::dims(b.rows(), b.cols()));
  }
  Matrix<Scalar> out(x.rows(), w.cols());
  out.noalias() = x.value().lazyProduct(w.value());
  out.rowwise() += b.value().row(0);
  const int ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(out), detail::any_requires_grad({x, w, b}),
                        [ix, iw, ib](Tape<Scalar>& t, int self) {
                          const Matrix<Scalar>& g = t.grad(self);
                          if (t.requires_grad(ix)) t.grad(ix).noalias() += g * t.value(iw).transpose();
                          if (t.requires_grad(iw)) t.grad(iw).noalias() += t.value(ix).transpose() * g;
                          if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
                        });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), detail::any_requires_grad({a, b}), [ia, ib](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), detail::any_requires_grad({a, b}), [ia, ib](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) -= g;
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseProduct(b.value()), detail::any_requires_grad({a, b}),
                        [ia, ib](Tape<Scalar>& t, int self) {
                          const Matrix<Scalar>& g = t.grad(self);
                          if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
                          if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
                        });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id;
  return a.tape->record(a.value() * s, a.tape->requires_grad(a), [ia, s](Tape<Scalar>& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id;
  Matrix<Scalar> out = a.value().array() + s;
  return a.tape->record(std::move(out), a.tape->requires_grad(a),
                        [ia](Tape<Scalar>& t, int self) { t.grad(ia) += t.grad(self); });
}

/// x + r with the 1 x C row r broadcast over rows.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& r) {
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw DimensionError("add_row: row " + detail::dims(r.rows(), r.cols()) + " vs input " +
                         detail::dims(x.rows(), x.cols()));
  }
  Matrix<Scalar> out = x.value();
  out.rowwise() += r.value().row(0);
  const int ix = x.id, ir = r.id;
  return x.tape->record(std::move(out), detail::any_requires_grad({x, r}), [ix, ir](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    if (t.requires_grad(ix)) t.grad(ix) += g;
    if (t.requires_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

/// Gaussian-error linear unit, exact erf form.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  constexpr Scalar kInvSqrt2 = Scalar(0.70710678118654752440);
  constexpr Scalar kInvSqrt2Pi = Scalar(0.39894228040143267794);
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * kInvSqrt2)); });
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    const Matrix<Scalar> d = t.value(ix).unaryExpr([](Scalar v) {
      return Scalar(0.5) * (Scalar(1) + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(Scalar(-0.5) * v * v);
    });
    t.grad(ix) += g.cwiseProduct(d);
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& y = t.value(self);
    t.grad(ix) += t.grad(self).cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
  });
}

/// log(1 + exp(x)), overflow-safe.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) {
    return v > Scalar(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    const Matrix<Scalar> d = t.value(ix).unaryExpr([](Scalar v) {
      if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
      const Scalar e = std::exp(v);
      return e / (Scalar(1) + e);
    });
    t.grad(ix) += t.grad(self).cwiseProduct(d);
  });
}

/// Row-wise layer normalization with learned gain and shift (both 1 x C).
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta, Scalar eps = Scalar(1e-5)) {
  const Index n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c || gamma.rows() != 1 || beta.rows() != 1) {
    throw DimensionError("layer_norm: gain/shift width does not match input width " + std::to_string(c));
  }
  Matrix<Scalar> xhat(n, c);
  std::vector<Scalar> inv_std(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto row = x.value().row(i);
    const Scalar mean = row.mean();
    const Scalar var = (row.array() - mean).square().mean();
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (row.array() - mean) * is;
  }
  Matrix<Scalar> out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->record(
      std::move(out), detail::any_requires_grad({x, gamma, beta}),
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, int self) {
        const Matrix<Scalar>& g = t.grad(self);
        if (t.requires_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        if (t.requires_grad(ix)) {
          Matrix<Scalar>& gx = t.grad(ix);
          const auto gam = t.value(ig).row(0).array();
          for (Index i = 0; i < g.rows(); ++i) {
            const Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat = g.row(i).array() * gam;
            const Scalar m1 = dxhat.mean();
            const Scalar m2 = (dxhat * xhat.row(i).array()).mean();
            gx.row(i).array() += inv_std[static_cast<std::size_t>(i)] * (dxhat - m1 - xhat.row(i).array() * m2);
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const Index n = parts[0].rows();
  Index c = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    c += p.cols();
    rg = rg || p.tape->requires_grad(p);
  }
  Matrix<Scalar> out(n, c);
  std::vector<int> ids;
  std::vector<Index> widths;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  return parts[0].tape->record(std::move(out), rg, [ids, widths](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.grad(ids[k]) += g.middleCols(o, widths[k]);
      o += widths[k];
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Var<Scalar> parts[] = {a, b};
  return concat_cols<Scalar>(std::span<const Var<Scalar>>(parts));
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const Index c = parts[0].cols();
  Index n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    n += p.rows();
    rg = rg || p.tape->requires_grad(p);
  }
  Matrix<Scalar> out(n, c);
  std::vector<int> ids;
  std::vector<Index> heights;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
    ids.push_back(p.id);
    heights.push_back(p.rows());
  }
  return parts[0].tape->record(std::move(out), rg, [ids, heights](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.grad(ids[k]) += g.middleRows(o, heights[k]);
      o += heights[k];
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  const int ix = x.id;
  return x.tape->record(x.value().middleCols(start, count), x.tape->requires_grad(x),
                        [ix, start, count](Tape<Scalar>& t, int self) {
                          t.grad(ix).middleCols(start, count) += t.grad(self);
                        });
}

/// out[i] = x[idx[i]]; backward scatter-adds.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& x, std::vector<Index> idx) {
  Matrix<Scalar> out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.value().row(idx[i]);
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix, idx = std::move(idx)](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Matrix<Scalar>& gx = t.grad(ix);
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

/// Row-major reinterpretation to rows x cols.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Index rows, Index cols) {
  if (rows * cols != x.value().size()) throw DimensionError("reshape: element count changes");
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(x.value().data(), rows, cols);
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    Matrix<Scalar>& gx = t.grad(ix);
    Eigen::Map<Matrix<Scalar>>(gx.data(), gx.rows(), gx.cols()) +=
        Eigen::Map<const Matrix<Scalar>>(t.grad(self).data(), gx.rows(), gx.cols());
  });
}

/// Row i comes from `a` where take_a[i] is set, otherwise from `b`.
template <typename Scalar>
Var<Scalar> where_rows(const std::vector<char>& take_a, const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "where_rows");
  if (static_cast<Index>(take_a.size()) != a.rows()) throw DimensionError("where_rows: mask length");
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) out.row(i) = take_a[static_cast<std::size_t>(i)] ? a.value().row(i) : b.value().row(i);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), detail::any_requires_grad({a, b}), [ia, ib, take_a](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    for (Index i = 0; i < g.rows(); ++i) {
      const int dst = take_a[static_cast<std::size_t>(i)] ? ia : ib;
      if (t.requires_grad(dst)) t.grad(dst).row(i) += g.row(i);
    }
  });
}

/// g * a + (1 - g) * b, elementwise.
template <typename Scalar>
Var<Scalar> gate_mix(const Var<Scalar>& g, const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(g, a, "gate_mix");
  detail::require_same_shape(a, b, "gate_mix");
  Matrix<Scalar> out = b.value() + g.value().cwiseProduct(a.value() - b.value());
  const int ig = g.id, ia = a.id, ib = b.id;
  return g.tape->record(std::move(out), detail::any_requires_grad({g, a, b}), [ig, ia, ib](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& gr = t.grad(self);
    if (t.requires_grad(ig)) t.grad(ig) += gr.cwiseProduct(t.value(ia) - t.value(ib));
    if (t.requires_grad(ia)) t.grad(ia) += gr.cwiseProduct(t.value(ig));
    if (t.requires_grad(ib)) t.grad(ib) += gr.cwiseProduct((Scalar(1) - t.value(ig).array()).matrix());
  });
}

/// Mean of each row segment [offsets[s], offsets[s+1]); empty segments give zero rows.
template <typename Scalar>
Var<Scalar> segment_mean(const Var<Scalar>& x, std::vector<Index> offsets) {
  detail::check_offsets(offsets, x.rows(), "segment_mean");
  const Index segs = static_cast<Index>(offsets.size()) - 1;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(segs, x.cols());
  for (Index s = 0; s < segs; ++s) {
    const Index b = offsets[s], e = offsets[s + 1];
    for (Index r = b; r < e; ++r) out.row(s) += x.value().row(r);
    if (e > b) out.row(s) /= static_cast<Scalar>(e - b);
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix, offsets = std::move(offsets)](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Matrix<Scalar>& gx = t.grad(ix);
    for (Index s = 0; s + 1 < static_cast<Index>(offsets.size()); ++s) {
      const Index b = offsets[s], e = offsets[s + 1];
      for (Index r = b; r < e; ++r) gx.row(r) += g.row(s) / static_cast<Scalar>(e - b);
    }
  });
}

/// Softmax of an N x 1 score column within each row segment.
template <typename Scalar>
Var<Scalar> segment_softmax(const Var<Scalar>& scores, std::vector<Index> offsets) {
  if (scores.cols() != 1) throw DimensionError("segment_softmax: scores must be a column");
  detail::check_offsets(offsets, scores.rows(), "segment_softmax");
  Matrix<Scalar> out(scores.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const Index b = offsets[s], e = offsets[s + 1];
    if (e == b) continue;
    const Scalar m = scores.value().col(0).segment(b, e - b).maxCoeff();
    Scalar z = 0;
    for (Index r = b; r < e; ++r) {
      out(r, 0) = std::exp(scores.value()(r, 0) - m);
      z += out(r, 0);
    }
    for (Index r = b; r < e; ++r) out(r, 0) /= z;
  }
  const int is = scores.id;
  return scores.tape->record(std::move(out), scores.tape->requires_grad(scores),
                             [is, offsets = std::move(offsets)](Tape<Scalar>& t, int self) {
                               const Matrix<Scalar>& g = t.grad(self);
                               const Matrix<Scalar>& w = t.value(self);
                               Matrix<Scalar>& gs = t.grad(is);
                               for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                                 const Index b = offsets[s], e = offsets[s + 1];
                                 Scalar dot = 0;
                                 for (Index r = b; r < e; ++r) dot += w(r, 0) * g(r, 0);
                                 for (Index r = b; r < e; ++r) gs(r, 0) += w(r, 0) * (g(r, 0) - dot);
                               }
                             });
}

/// out[s] = sum over rows r of segment s of w[r] * x[r].
template <typename Scalar>
Var<Scalar> segment_weighted_sum(const Var<Scalar>& w, const Var<Scalar>& x, std::vector<Index> offsets) {
  if (w.cols() != 1 || w.rows() != x.rows()) throw DimensionError("segment_weighted_sum: weight column mismatch");
  detail::check_offsets(offsets, x.rows(), "segment_weighted_sum");
  const Index segs = static_cast<Index>(offsets.size()) - 1;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(segs, x.cols());
  for (Index s = 0; s < segs; ++s) {
    for (Index r = offsets[s]; r < offsets[s + 1]; ++r) out.row(s) += w.value()(r, 0) * x.value().row(r);
  }
  const int iw = w.id, ix = x.id;
  return w.tape->record(std::move(out), detail::any_requires_grad({w, x}),
                        [iw, ix, offsets = std::move(offsets)](Tape<Scalar>& t, int self) {
                          const Matrix<Scalar>& g = t.grad(self);
                          for (Index s = 0; s + 1 < static_cast<Index>(offsets.size()); ++s) {
                            for (Index r = offsets[s]; r < offsets[s + 1]; ++r) {
                              if (t.requires_grad(iw)) t.grad(iw)(r, 0) += g.row(s).dot(t.value(ix).row(r));
                              if (t.requires_grad(ix)) t.grad(ix).row(r) += t.value(iw)(r, 0) * g.row(s);
                            }
                          }
                        });
}

/// Running sum over steps: columns are grouped into consecutive blocks of
/// `width`, and block t of the output is the sum of input blocks 0..t.
template <typename Scalar>
Var<Scalar> cumsum_steps(const Var<Scalar>& x, Index width) {
  if (width <= 0 || x.cols() % width != 0) throw DimensionError("cumsum_steps: width does not divide columns");
  Matrix<Scalar> out = x.value();
  for (Index c = width; c < out.cols(); ++c) out.col(c) += out.col(c - width);
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix, width](Tape<Scalar>& t, int self) {
    Matrix<Scalar> g = t.grad(self);
    for (Index c = g.cols() - 1 - width; c >= 0; --c) g.col(c) += g.col(c + width);
    t.grad(ix) += g;
  });
}

/// Inverted dropout; identity when p == 0.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout rate must be < 1");
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - p));
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? Scalar(0) : keep_scale;
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix, mask = std::move(mask)](Tape<Scalar>& t, int self) {
    t.grad(ix) += t.grad(self).cwiseProduct(mask);
  });
}

/// Sum of all entries, as a 1 x 1 value.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    t.grad(ix).array() += t.grad(self)(0, 0);
  });
}

/// log softmax over all entries of x.
template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& x) {
  const Scalar m = x.value().maxCoeff();
  const Scalar lse = m + std::log((x.value().array() - m).exp().sum());
  Matrix<Scalar> out = x.value().array() - lse;
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    const Scalar gs = g.sum();
    t.grad(ix) += g - (t.value(self).array().exp() * gs).matrix();
  });
}

/// log(sum(exp(x))) over all entries, as a 1 x 1 value.
template <typename Scalar>
Var<Scalar> logsumexp(const Var<Scalar>& x) {
  const Scalar m = x.value().maxCoeff();
  if (!std::isfinite(m)) throw NumericError("logsumexp: no finite entries");
  Matrix<Scalar> out(1, 1);
  out(0, 0) = m + std::log((x.value().array() - m).exp().sum());
  const int ix = x.id;
  return x.tape->record(std::move(out), x.tape->requires_grad(x), [ix](Tape<Scalar>& t, int self) {
    const Scalar lse = t.value(self)(0, 0);
    t.grad(ix) += ((t.value(ix).array() - lse).exp() * t.grad(self)(0, 0)).matrix();
  });
}

/// Copies x as a gradient barrier. Gradient arriving here is measured (see
/// Tape::blocked_gradient_sq) and dropped.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x) {
  const bool upstream = x.tape->requires_grad(x);
  return x.tape->record(x.tape->stop_value(x.value()), upstream, [](Tape<Scalar>& t, int self) {
    t.add_blocked_gradient(t.grad(self).squaredNorm());
  });
}

}  // namespace jointcast
