#include "jointcast/model/scoring.hpp"

#include <cmath>

namespace jointcast {

template <typename Scalar>
std::vector<double> SceneScores<Scalar>::pi() const {
  std::vector<double> out;
  for (Index k = 0; k < log_pi.rows(); ++k) out.push_back(std::exp(static_cast<double>(log_pi.value()(k, 0))));
  return out;
}

template <typename Scalar>
void declare_scoring_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg) {
  const Index d = cfg.hidden;
  store.add_uniform("score.query", {1, d}, d);
  declare_linear(store, "score.key", d, d);
  declare_linear(store, "score.value", d, d);
  declare_mlp(store, "score.head", d, {d, 1});
}

template <typename Scalar>
Var<Scalar> attentive_pool(const Context<Scalar>& ctx, const Var<Scalar>& mode_emb, Index agents,
                           std::vector<Scalar>* weights) {
  if (agents < 1 || mode_emb.rows() % agents != 0) {
    throw DimensionError("attentive_pool: " + std::to_string(mode_emb.rows()) + " rows are not a multiple of " +
                         std::to_string(agents) + " agents");
  }
  const Index modes = mode_emb.rows() / agents;
  std::vector<Index> offsets;
  for (Index k = 0; k <= modes; ++k) offsets.push_back(k * agents);
  Var<Scalar> keys = linear(ctx, mode_emb, "score.key");
  Var<Scalar> values = linear(ctx, mode_emb, "score.value");
  Var<Scalar> query = ctx.param("score.query");
  // scores = keys q^T / sqrt(D), via matmul against the transposed query.
  Var<Scalar> scores = scale(matmul(keys, reshape(query, query.cols(), 1)),
                             Scalar(1) / std::sqrt(static_cast<Scalar>(mode_emb.cols())));
  Var<Scalar> w = segment_softmax(scores, offsets);
  if (weights != nullptr) weights->assign(w.value().data(), w.value().data() + w.value().size());
  return segment_weighted_sum(w, values, offsets);
}

template <typename Scalar>
SceneScores<Scalar> score_scene(const Context<Scalar>& ctx, const Var<Scalar>& mode_emb, Index agents) {
  SceneScores<Scalar> s;
  s.logits = mlp(ctx, attentive_pool(ctx, mode_emb, agents), "score.head");
  s.log_pi = log_softmax(s.logits);
  return s;
}

#define JOINTCAST_INSTANTIATE(S)                                                                              \
  template struct SceneScores<S>;                                                                             \
  template void declare_scoring_parameters<S>(ParameterStore<S>&, const ModelConfig&);                        \
  template Var<S> attentive_pool<S>(const Context<S>&, const Var<S>&, Index, std::vector<S>*);                \
  template SceneScores<S> score_scene<S>(const Context<S>&, const Var<S>&, Index);
JOINTCAST_INSTANTIATE(float)
JOINTCAST_INSTANTIATE(double)
#undef JOINTCAST_INSTANTIATE

}  // namespace jointcast
