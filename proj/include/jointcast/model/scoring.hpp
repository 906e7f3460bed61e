#pragma once

#include "jointcast/core/layers.hpp"
#include "jointcast/core/parameter_store.hpp"
#include "jointcast/model/config.hpp"

namespace jointcast {

template <typename Scalar>
struct SceneScores {
  Var<Scalar> logits;  // [K, 1]
  Var<Scalar> log_pi;  // [K, 1]

  std::vector<double> pi() const;
};

template <typename Scalar>
void declare_scoring_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg);

/// One learned query attends over the `agents` embeddings of each mode
/// (rows k*agents + j of `mode_emb`). Returns [K, D]; `weights` receives the
/// per-row attention weights when given.
template <typename Scalar>
Var<Scalar> attentive_pool(const Context<Scalar>& ctx, const Var<Scalar>& mode_emb, Index agents,
                           std::vector<Scalar>* weights = nullptr);

template <typename Scalar>
SceneScores<Scalar> score_scene(const Context<Scalar>& ctx, const Var<Scalar>& mode_emb, Index agents);

}  // namespace jointcast
