#include "jointcast/model/encoder.hpp"

#include "jointcast/scene/descriptor_embedding.hpp"

namespace jointcast {

namespace {

std::string layer(const char* base, int l) { return std::string(base) + std::to_string(l); }

}  // namespace

template <typename Scalar>
void declare_encoder_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg) {
  const Index d = cfg.hidden;
  declare_mlp(store, "enc.map.segment", kSegmentFeatures, {d, d});
  declare_mlp(store, "enc.map.embed", d + kNumPolygonKinds, {d, d});
  declare_descriptor_embedding(store, "enc.map.pe", cfg);
  for (int l = 0; l < cfg.encoder_layers; ++l) declare_attention_block(store, layer("enc.map.layer", l), d, false);

  declare_mlp(store, "enc.agent.embed", kAgentFeatures, {d, d});
  declare_descriptor_embedding(store, "enc.agent.pe_time", cfg);
  declare_descriptor_embedding(store, "enc.agent.pe_map", cfg);
  declare_descriptor_embedding(store, "enc.agent.pe_social", cfg);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = layer("enc.agent.layer", l);
    declare_attention_block(store, p + ".time", d, false);
    declare_attention_block(store, p + ".map", d, true);
    declare_attention_block(store, p + ".social", d, false);
  }
}

template <typename Scalar>
Var<Scalar> encode_map(const Context<Scalar>& ctx, const SceneGeometry& geom, const ModelConfig& cfg) {
  if (geom.num_polygons < 1) throw ValidationError("encoder: scene has no map polygons");
  Var<Scalar> seg = mlp(ctx, ctx.constant(geom.segment_features.cast<Scalar>()), "enc.map.segment");
  Var<Scalar> pooled = segment_mean(seg, geom.segment_offsets);
  Var<Scalar> x = mlp(ctx, concat_cols(pooled, ctx.constant(geom.polygon_kinds.cast<Scalar>())), "enc.map.embed");
  Var<Scalar> pe = embed_descriptor(ctx, geom.map_map.descriptors, "enc.map.pe", cfg);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    x = attention_block(ctx, x, nullptr, pe, geom.map_map.edges, cfg.heads, layer("enc.map.layer", l));
    ctx.count("encoder.map_map");
  }
  return x;
}

template <typename Scalar>
Var<Scalar> encode_agents(const Context<Scalar>& ctx, const SceneGeometry& geom, const Var<Scalar>& map_enc,
                          const ModelConfig& cfg) {
  if (map_enc.rows() != geom.num_polygons || map_enc.cols() != cfg.hidden) {
    throw DimensionError("encoder: map encoding is " + detail::dims(map_enc.rows(), map_enc.cols()) + ", scene needs " +
                         detail::dims(geom.num_polygons, cfg.hidden));
  }
  Var<Scalar> x = mlp(ctx, ctx.constant(geom.agent_features.cast<Scalar>()), "enc.agent.embed");
  Var<Scalar> pe_time = embed_descriptor(ctx, geom.temporal.descriptors, "enc.agent.pe_time", cfg);
  Var<Scalar> pe_map = embed_descriptor(ctx, geom.agent_map.descriptors, "enc.agent.pe_map", cfg);
  Var<Scalar> pe_social = embed_descriptor(ctx, geom.social.descriptors, "enc.agent.pe_social", cfg);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = layer("enc.agent.layer", l);
    x = attention_block(ctx, x, nullptr, pe_time, geom.temporal.edges, cfg.heads, p + ".time");
    ctx.count("encoder.temporal");
    x = attention_block(ctx, x, &map_enc, pe_map, geom.agent_map.edges, cfg.heads, p + ".map");
    ctx.count("encoder.agent_map");
    x = attention_block(ctx, x, nullptr, pe_social, geom.social.edges, cfg.heads, p + ".social");
    ctx.count("encoder.social");
  }
  return where_rows(geom.agent_valid, x, ctx.constant(Matrix<Scalar>::Zero(x.rows(), x.cols())));
}

template <typename Scalar>
SceneEncoding<Scalar> encode_scene(const Context<Scalar>& ctx, const SceneGeometry& geom, const ModelConfig& cfg) {
  SceneEncoding<Scalar> enc;
  enc.map_enc = encode_map(ctx, geom, cfg);
  enc.agent_enc = encode_agents(ctx, geom, enc.map_enc, cfg);
  enc.geometry = &geom;
  return enc;
}

#define JOINTCAST_INSTANTIATE(S)                                                                                \
  template void declare_encoder_parameters<S>(ParameterStore<S>&, const ModelConfig&);                         \
  template Var<S> encode_map<S>(const Context<S>&, const SceneGeometry&, const ModelConfig&);                  \
  template Var<S> encode_agents<S>(const Context<S>&, const SceneGeometry&, const Var<S>&, const ModelConfig&); \
  template SceneEncoding<S> encode_scene<S>(const Context<S>&, const SceneGeometry&, const ModelConfig&);
JOINTCAST_INSTANTIATE(float)
JOINTCAST_INSTANTIATE(double)
#undef JOINTCAST_INSTANTIATE

}  // namespace jointcast
