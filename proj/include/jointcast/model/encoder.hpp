#pragma once

#include "jointcast/core/layers.hpp"
#include "jointcast/core/parameter_store.hpp"
#include "jointcast/model/config.hpp"
#include "jointcast/model/geometry.hpp"

namespace jointcast {

/// Map encodings [M, D] and agent encodings [A*T, D] (row a*T + t) plus the
/// geometry whose frames and neighborhoods produced them.
template <typename Scalar>
struct SceneEncoding {
  Var<Scalar> map_enc;
  Var<Scalar> agent_enc;
  const SceneGeometry* geometry = nullptr;
};

template <typename Scalar>
void declare_encoder_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg);

template <typename Scalar>
Var<Scalar> encode_map(const Context<Scalar>& ctx, const SceneGeometry& geom, const ModelConfig& cfg);

/// Rows of invalid agent states are zero.
template <typename Scalar>
Var<Scalar> encode_agents(const Context<Scalar>& ctx, const SceneGeometry& geom, const Var<Scalar>& map_enc,
                          const ModelConfig& cfg);

template <typename Scalar>
SceneEncoding<Scalar> encode_scene(const Context<Scalar>& ctx, const SceneGeometry& geom, const ModelConfig& cfg);

}  // namespace jointcast
