#pragma once

#include "jointcast/model/decoder.hpp"
#include "jointcast/model/objective.hpp"
#include "jointcast/model/scoring.hpp"

namespace jointcast {

template <typename Scalar>
void declare_model_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg) {
  declare_encoder_parameters(store, cfg);
  declare_decoder_parameters(store, cfg);
  declare_scoring_parameters(store, cfg);
}

template <typename Scalar>
struct ModelOutput {
  SceneEncoding<Scalar> encoding;
  DecoderOutput<Scalar> decoded;
  SceneScores<Scalar> scores;
};

/// Encode, decode and score one scene.
template <typename Scalar>
ModelOutput<Scalar> run_model(const Context<Scalar>& ctx, const SceneGeometry& geom, const ModelConfig& cfg) {
  ModelOutput<Scalar> out;
  out.encoding = encode_scene(ctx, geom, cfg);
  out.decoded = decode(ctx, out.encoding, cfg);
  out.scores = score_scene(ctx, out.decoded.refinement.mode_emb, geom.num_targets());
  return out;
}

}  // namespace jointcast
