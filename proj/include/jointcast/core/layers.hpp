#pragma once

#include <limits>
#include <map>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "jointcast/core/ops.hpp"

namespace jointcast {

/// Everything a forward pass needs besides its inputs.
template <typename Scalar>
struct Context {
  Tape<Scalar>* tape = nullptr;
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;                       // dropout masks; required when training with dropout > 0
  std::map<std::string, int>* counters = nullptr;  // optional instrumentation

  Var<Scalar> param(const std::string& name) const { return tape->parameter(name); }
  Var<Scalar> constant(Matrix<Scalar> m) const { return tape->constant(std::move(m)); }

  void count(const std::string& key) const {
    if (counters != nullptr) ++(*counters)[key];
  }

  Var<Scalar> maybe_dropout(const Var<Scalar>& x) const {
    if (!training || dropout <= 0.0) return x;
    if (rng == nullptr) throw StateError("dropout requested without an rng");
    return jointcast::dropout(x, dropout, *rng);
  }
};

// ---------------------------------------------------------------------------
// Linear and MLP

template <typename Scalar>
void declare_linear(ParameterStore<Scalar>& store, const std::string& prefix, Index din, Index dout,
                    bool bias = true, bool zero_init = false) {
  auto& w = store.add_uniform(prefix + ".w", {din, dout}, din);
  if (zero_init) w.data.setZero();
  if (bias) store.add(prefix + ".b", {dout});
}

/// y = x W + b using parameters `<prefix>.w` [Din, Dout] and, when registered, `<prefix>.b` [Dout].
template <typename Scalar>
Var<Scalar> linear(const Context<Scalar>& ctx, const Var<Scalar>& x, const std::string& prefix) {
  Var<Scalar> w = ctx.param(prefix + ".w");
  if (x.cols() != w.rows()) {
    throw DimensionError("linear '" + prefix + "': input has " + std::to_string(x.cols()) +
                         " features, weight expects " + std::to_string(w.rows()));
  }
  ParameterStore<Scalar>* store = ctx.tape->store();
  if (store->contains(prefix + ".b")) return affine(x, w, ctx.param(prefix + ".b"));
  return matmul(x, w);
}

/// Registers an MLP with layer output sizes `sizes` (last layer linear).
template <typename Scalar>
void declare_mlp(ParameterStore<Scalar>& store, const std::string& prefix, Index din, std::span<const Index> sizes,
                 bool zero_final = false) {
  if (sizes.empty()) throw ConfigError("mlp '" + prefix + "': empty layer list");
  Index in = din;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const bool last = i + 1 == sizes.size();
    declare_linear(store, prefix + ".l" + std::to_string(i), in, sizes[i], true, last && zero_final);
    in = sizes[i];
  }
}

template <typename Scalar>
void declare_mlp(ParameterStore<Scalar>& store, const std::string& prefix, Index din,
                 std::initializer_list<Index> sizes, bool zero_final = false) {
  declare_mlp(store, prefix, din, std::span<const Index>(sizes.begin(), sizes.size()), zero_final);
}

/// Alternating linear + GELU; the final layer is linear. Depth is read from the store.
template <typename Scalar>
Var<Scalar> mlp(const Context<Scalar>& ctx, const Var<Scalar>& x, const std::string& prefix) {
  ParameterStore<Scalar>* store = ctx.tape->store();
  if (store == nullptr) throw StateError("mlp '" + prefix + "': tape has no parameter store");
  std::size_t depth = 0;
  while (store->contains(prefix + ".l" + std::to_string(depth) + ".w")) ++depth;
  if (depth == 0) throw StateError("mlp '" + prefix + "' is not registered");
  Var<Scalar> h = x;
  for (std::size_t i = 0; i < depth; ++i) {
    h = linear(ctx, h, prefix + ".l" + std::to_string(i));
    if (i + 1 < depth) h = gelu(h);
  }
  return h;
}

template <typename Scalar>
void declare_layer_norm(ParameterStore<Scalar>& store, const std::string& prefix, Index d) {
  store.add(prefix + ".gamma", {d}).data.setOnes();
  store.add(prefix + ".beta", {d});
}

template <typename Scalar>
Var<Scalar> layer_norm(const Context<Scalar>& ctx, const Var<Scalar>& x, const std::string& prefix) {
  return layer_norm(x, ctx.param(prefix + ".gamma"), ctx.param(prefix + ".beta"));
}

// ---------------------------------------------------------------------------
// Sparse multi-head attention

/// Query -> key edges in CSR form. Edge e of query i (offsets[i] <= e < offsets[i+1])
/// attends key row keys[e] with relative-position row pe_rows[e].
struct EdgeList {
  std::vector<Index> offsets{0};
  std::vector<Index> keys;
  std::vector<Index> pe_rows;

  Index num_queries() const { return static_cast<Index>(offsets.size()) - 1; }
  Index num_edges() const { return static_cast<Index>(keys.size()); }
  Index degree(Index q) const { return offsets[q + 1] - offsets[q]; }

  void add_edge(Index key, Index pe_row) {
    keys.push_back(key);
    pe_rows.push_back(pe_row);
  }
  void close_query() { offsets.push_back(static_cast<Index>(keys.size())); }

  /// Dense boolean mask (row-major Nq x Nk, true = attend) with pe row q*Nk + k.
  static EdgeList from_mask(std::span<const char> mask, Index nq, Index nk) {
    EdgeList e;
    for (Index i = 0; i < nq; ++i) {
      for (Index j = 0; j < nk; ++j) {
        if (mask[static_cast<std::size_t>(i * nk + j)]) e.add_edge(j, i * nk + j);
      }
      e.close_query();
    }
    return e;
  }
};

/// Per-head scaled dot-product attention over an edge list.
///
/// Key of edge (i -> j, p) is k[j] + pk[p]; value is v[j] + pv[p]. Rows of
/// queries without edges are zero. When `weights` is given it receives the
/// softmax weight of every (edge, head), edge-major.
template <typename Scalar>
Var<Scalar> attention_core(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v, const Var<Scalar>& pk,
                           const Var<Scalar>& pv, const EdgeList& edges, int heads,
                           std::vector<Scalar>* weights = nullptr) {
  const Index d = q.cols();
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(d));
  }
  if (k.cols() != d || v.cols() != d || pk.cols() != d || pv.cols() != d || k.rows() != v.rows() ||
      pk.rows() != pv.rows()) {
    throw DimensionError("attention: projected operand widths disagree");
  }
  if (edges.num_queries() != q.rows()) throw DimensionError("attention: edge list does not match query count");
  for (Index e = 0; e < edges.num_edges(); ++e) {
    if (edges.keys[e] < 0 || edges.keys[e] >= k.rows() || edges.pe_rows[e] < 0 || edges.pe_rows[e] >= pk.rows()) {
      throw DimensionError("attention: edge index out of range");
    }
  }
  const Index dh = d / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Matrix<Scalar>& Q = q.value();
  const Matrix<Scalar>& K = k.value();
  const Matrix<Scalar>& V = v.value();
  const Matrix<Scalar>& PK = pk.value();
  const Matrix<Scalar>& PV = pv.value();
  if (!Q.allFinite() || !K.allFinite() || !V.allFinite() || !PK.allFinite() || !PV.allFinite()) {
    throw NumericError("attention: non-finite input");
  }

  const Index ne = edges.num_edges();
  std::vector<Scalar> alpha(static_cast<std::size_t>(ne * heads));
  Matrix<Scalar> out = Matrix<Scalar>::Zero(q.rows(), d);
  for (Index i = 0; i < q.rows(); ++i) {
    const Index b = edges.offsets[i], e_end = edges.offsets[i + 1];
    if (b == e_end) continue;
    for (Index h = 0; h < heads; ++h) {
      const auto qh = Q.row(i).segment(h * dh, dh);
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (Index e = b; e < e_end; ++e) {
        const Scalar s = qh.dot(K.row(edges.keys[e]).segment(h * dh, dh) + PK.row(edges.pe_rows[e]).segment(h * dh, dh)) *
                         inv_sqrt;
        alpha[static_cast<std::size_t>(e * heads + h)] = s;
        mx = std::max(mx, s);
      }
      Scalar z = 0;
      for (Index e = b; e < e_end; ++e) {
        Scalar& a = alpha[static_cast<std::size_t>(e * heads + h)];
        a = std::exp(a - mx);
        z += a;
      }
      auto oh = out.row(i).segment(h * dh, dh);
      for (Index e = b; e < e_end; ++e) {
        Scalar& a = alpha[static_cast<std::size_t>(e * heads + h)];
        a /= z;
        oh += a * (V.row(edges.keys[e]).segment(h * dh, dh) + PV.row(edges.pe_rows[e]).segment(h * dh, dh));
      }
    }
  }
  if (weights != nullptr) *weights = alpha;

  const int iq = q.id, ik = k.id, iv = v.id, ipk = pk.id, ipv = pv.id;
  const bool rg = detail::any_requires_grad({q, k, v, pk, pv});
  return q.tape->record(std::move(out), rg, [=, alpha = std::move(alpha)](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& G = t.grad(self);
    const Matrix<Scalar>& Qv = t.value(iq);
    const Matrix<Scalar>& Kv = t.value(ik);
    const Matrix<Scalar>& Vv = t.value(iv);
    const Matrix<Scalar>& PKv = t.value(ipk);
    const Matrix<Scalar>& PVv = t.value(ipv);
    const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
    const bool gpk = t.requires_grad(ipk), gpv = t.requires_grad(ipv);
    Matrix<Scalar>* dQ = gq ? &t.grad(iq) : nullptr;
    Matrix<Scalar>* dK = gk ? &t.grad(ik) : nullptr;
    Matrix<Scalar>* dV = gv ? &t.grad(iv) : nullptr;
    Matrix<Scalar>* dPK = gpk ? &t.grad(ipk) : nullptr;
    Matrix<Scalar>* dPV = gpv ? &t.grad(ipv) : nullptr;
    std::vector<Scalar> dscore;
    for (Index i = 0; i < G.rows(); ++i) {
      const Index b = edges.offsets[i], e_end = edges.offsets[i + 1];
      if (b == e_end) continue;
      dscore.resize(static_cast<std::size_t>(e_end - b));
      for (Index h = 0; h < heads; ++h) {
        const auto gh = G.row(i).segment(h * dh, dh);
        Scalar dot = 0;
        for (Index e = b; e < e_end; ++e) {
          const Scalar a = alpha[static_cast<std::size_t>(e * heads + h)];
          const Scalar da =
              gh.dot(Vv.row(edges.keys[e]).segment(h * dh, dh) + PVv.row(edges.pe_rows[e]).segment(h * dh, dh));
          dscore[static_cast<std::size_t>(e - b)] = da;
          dot += a * da;
          if (dV != nullptr) dV->row(edges.keys[e]).segment(h * dh, dh) += a * gh;
          if (dPV != nullptr) dPV->row(edges.pe_rows[e]).segment(h * dh, dh) += a * gh;
        }
        const auto qh = Qv.row(i).segment(h * dh, dh);
        for (Index e = b; e < e_end; ++e) {
          const Scalar a = alpha[static_cast<std::size_t>(e * heads + h)];
          const Scalar ds = a * (dscore[static_cast<std::size_t>(e - b)] - dot) * inv_sqrt;
          if (ds == Scalar(0)) continue;
          if (dQ != nullptr) {
            dQ->row(i).segment(h * dh, dh) +=
                ds * (Kv.row(edges.keys[e]).segment(h * dh, dh) + PKv.row(edges.pe_rows[e]).segment(h * dh, dh));
          }
          if (dK != nullptr) dK->row(edges.keys[e]).segment(h * dh, dh) += ds * qh;
          if (dPK != nullptr) dPK->row(edges.pe_rows[e]).segment(h * dh, dh) += ds * qh;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gated relative-positional attention

/// Parameters of a gated attention layer of width d under `prefix`.
template <typename Scalar>
void declare_gated_attention(ParameterStore<Scalar>& store, const std::string& prefix, Index d) {
  declare_linear(store, prefix + ".q", d, d);
  declare_linear(store, prefix + ".k", d, d);
  declare_linear(store, prefix + ".v", d, d);
  declare_linear(store, prefix + ".k_rel", d, d, /*bias=*/false);
  declare_linear(store, prefix + ".v_rel", d, d, /*bias=*/false);
  declare_linear(store, prefix + ".out", d, d);
  declare_linear(store, prefix + ".gate", 2 * d, d);
  declare_mlp(store, prefix + ".self", d, {d, d});
}

/// Multi-head attention whose keys and values are the projection of
/// [kv feature || relative-position embedding], fused with the query by a
/// sigmoid gate:
///
///   g   = sigmoid(W_g [q || attn] + b_g)
///   out = g * attn + (1 - g) * self(q)
///
/// Queries with no edges return self(q).
template <typename Scalar>
Var<Scalar> gated_attention(const Context<Scalar>& ctx, const Var<Scalar>& q, const Var<Scalar>& kv,
                            const Var<Scalar>& rel_pe, const EdgeList& edges, int heads, const std::string& prefix,
                            std::vector<Scalar>* weights = nullptr) {
  if (q.cols() != kv.cols() || q.cols() != rel_pe.cols()) {
    throw DimensionError("gated_attention '" + prefix + "': query, key/value and positional widths differ");
  }
  if (heads <= 0 || q.cols() % heads != 0) {
    throw ConfigError("gated_attention '" + prefix + "': " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(q.cols()));
  }
  Var<Scalar> self_path = mlp(ctx, q, prefix + ".self");
  std::vector<char> has_edges(static_cast<std::size_t>(q.rows()));
  bool any = false;
  for (Index i = 0; i < q.rows(); ++i) {
    has_edges[static_cast<std::size_t>(i)] = edges.degree(i) > 0;
    any = any || has_edges[static_cast<std::size_t>(i)];
  }
  if (!any) {
    if (weights != nullptr) weights->clear();
    return self_path;
  }
  Var<Scalar> qp = linear(ctx, q, prefix + ".q");
  Var<Scalar> kp = linear(ctx, kv, prefix + ".k");
  Var<Scalar> vp = linear(ctx, kv, prefix + ".v");
  Var<Scalar> pk = linear(ctx, rel_pe, prefix + ".k_rel");
  Var<Scalar> pv = linear(ctx, rel_pe, prefix + ".v_rel");
  Var<Scalar> agg = attention_core(qp, kp, vp, pk, pv, edges, heads, weights);
  Var<Scalar> attn = linear(ctx, agg, prefix + ".out");
  Var<Scalar> gate = sigmoid(linear(ctx, concat_cols(q, attn), prefix + ".gate"));
  Var<Scalar> mixed = gate_mix(gate, attn, self_path);
  return where_rows(has_edges, mixed, self_path);
}

/// Dense form: rel_pe is [Nq*Nk, D] (row q*Nk + k) and mask is row-major Nq x Nk.
template <typename Scalar>
Var<Scalar> gated_attention(const Context<Scalar>& ctx, const Var<Scalar>& q, const Var<Scalar>& kv,
                            const Var<Scalar>& rel_pe, std::span<const char> mask, int heads,
                            const std::string& prefix, std::vector<Scalar>* weights = nullptr) {
  if (static_cast<Index>(mask.size()) != q.rows() * kv.rows() || rel_pe.rows() != q.rows() * kv.rows()) {
    throw DimensionError("gated_attention '" + prefix + "': mask/positional rows must be Nq*Nk");
  }
  return gated_attention(ctx, q, kv, rel_pe, EdgeList::from_mask(mask, q.rows(), kv.rows()), heads, prefix, weights);
}

/// Pre-norm residual block: x + gated_attention(LN(x), LN(kv)) followed by x + FFN(LN(x)).
template <typename Scalar>
void declare_attention_block(ParameterStore<Scalar>& store, const std::string& prefix, Index d, bool cross) {
  declare_layer_norm(store, prefix + ".norm_q", d);
  if (cross) declare_layer_norm(store, prefix + ".norm_kv", d);
  declare_gated_attention(store, prefix + ".attn", d);
  declare_layer_norm(store, prefix + ".norm_ff", d);
  declare_mlp(store, prefix + ".ff", d, {4 * d, d});
}

/// Residual attention block. `kv` may be empty (invalid Var) for self-attention.
template <typename Scalar>
Var<Scalar> attention_block(const Context<Scalar>& ctx, const Var<Scalar>& x, const Var<std::type_identity_t<Scalar>>* kv,
                            const Var<Scalar>& rel_pe, const EdgeList& edges, int heads, const std::string& prefix) {
  Var<Scalar> xn = layer_norm(ctx, x, prefix + ".norm_q");
  Var<Scalar> kvn = kv == nullptr ? xn : layer_norm(ctx, *kv, prefix + ".norm_kv");
  Var<Scalar> h = add(x, ctx.maybe_dropout(gated_attention(ctx, xn, kvn, rel_pe, edges, heads, prefix + ".attn")));
  Var<Scalar> f = mlp(ctx, layer_norm(ctx, h, prefix + ".norm_ff"), prefix + ".ff");
  return add(h, ctx.maybe_dropout(f));
}

}  // namespace jointcast
