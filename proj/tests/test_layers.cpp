#include "doctest.h"
#include "jointcast/core/layers.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

constexpr double kTol = 1e-7;

// Parameters all drawn away from zero so no path is trivially dead.
void jitter(ParameterStore<double>& store, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& e : store.entries()) {
    for (Index i = 0; i < e.value.size(); ++i) e.value.data.data()[i] += rng.uniform(-0.2, 0.2);
  }
}

EdgeList ring(Index n, Index nk, Index degree) {
  EdgeList e;
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < degree; ++d) e.add_edge((i + d) % nk, (i * degree + d) % (n * degree));
    e.close_query();
  }
  return e;
}

}  // namespace

TEST_CASE("mlp and linear parameters match finite differences") {
  ParameterStore<double> store(1);
  declare_mlp(store, "m", 3, {5, 2});
  jitter(store, 2);
  Rng rng(3);
  const Matrix<double> x = random_matrix(4, 3, rng);
  auto f = [&](Tape<double>& t) {
    Context<double> ctx{&t};
    return probe(mlp(ctx, t.constant(x), "m"));
  };
  CHECK(finite_diff_check_store<double>(f, store, 1e-6).max_rel_error < kTol);
}

TEST_CASE("gated attention parameters match finite differences") {
  ParameterStore<double> store(4);
  declare_gated_attention(store, "att", 4);
  jitter(store, 5);
  Rng rng(6);
  const Matrix<double> q = random_matrix(3, 4, rng), kv = random_matrix(5, 4, rng), pe = random_matrix(6, 4, rng);
  EdgeList e = ring(3, 5, 2);
  e.offsets = {0, 2, 2, 4};
  e.keys.resize(4);
  e.pe_rows.resize(4);
  auto f = [&](Tape<double>& t) {
    Context<double> ctx{&t};
    return probe(gated_attention(ctx, t.constant(q), t.constant(kv), t.constant(pe), e, 2, "att"));
  };
  CHECK(finite_diff_check_store<double>(f, store, 1e-6).max_rel_error < kTol);
}

TEST_CASE("attention block parameters match finite differences") {
  for (bool cross : {false, true}) {
    ParameterStore<double> store(7);
    declare_attention_block(store, "blk", 4, cross);
    jitter(store, 8);
    Rng rng(9);
    const Matrix<double> x = random_matrix(4, 4, rng), kv = random_matrix(4, 4, rng), pe = random_matrix(8, 4, rng);
    const EdgeList e = ring(4, 4, 2);
    auto f = [&](Tape<double>& t) {
      Context<double> ctx{&t};
      Var<double> kvv = t.constant(kv);
      return probe(attention_block(ctx, t.constant(x), cross ? &kvv : nullptr, t.constant(pe), e, 2, "blk"));
    };
    CHECK(finite_diff_check_store<double>(f, store, 1e-6).max_rel_error < kTol);
  }
}
