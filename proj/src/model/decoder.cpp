#include "jointcast/model/decoder.hpp"

#include "jointcast/scene/descriptor_embedding.hpp"

namespace jointcast {

namespace {

template <typename Scalar>
struct StagePe {
  Var<Scalar> time, map, agent, mode;
};

template <typename Scalar>
void declare_stage(ParameterStore<Scalar>& store, const std::string& p, const ModelConfig& cfg) {
  const Index d = cfg.hidden;
  for (const char* pe : {".pe_time", ".pe_map", ".pe_agent", ".pe_mode"}) declare_descriptor_embedding(store, p + pe, cfg);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = p + ".layer" + std::to_string(l);
    declare_attention_block(store, lp + ".time", d, true);
    declare_attention_block(store, lp + ".map", d, true);
    declare_attention_block(store, lp + ".agent", d, false);
  }
  declare_attention_block(store, p + ".mode", d, false);
}

template <typename Scalar>
StagePe<Scalar> stage_pe(const Context<Scalar>& ctx, const SceneGeometry& g, const std::string& p, const ModelConfig& cfg) {
  return {embed_descriptor(ctx, g.mode_time.descriptors, p + ".pe_time", cfg),
          embed_descriptor(ctx, g.mode_map.descriptors, p + ".pe_map", cfg),
          embed_descriptor(ctx, g.mode_agent.descriptors, p + ".pe_agent", cfg),
          embed_descriptor(ctx, g.mode_mode.descriptors, p + ".pe_mode", cfg)};
}

// L_dec rounds of Mode2Time, Mode2Map and row-wise (agent) attention, then
// one column-wise attention across modes.
template <typename Scalar>
Var<Scalar> stage_stack(const Context<Scalar>& ctx, Var<Scalar> x, const SceneEncoding<Scalar>& enc,
                        const StagePe<Scalar>& pe, const std::string& p, const ModelConfig& cfg) {
  const SceneGeometry& g = *enc.geometry;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string lp = p + ".layer" + std::to_string(l);
    x = attention_block(ctx, x, &enc.agent_enc, pe.time, g.mode_time.edges, cfg.heads, lp + ".time");
    ctx.count("decoder.mode2time");
    x = attention_block(ctx, x, &enc.map_enc, pe.map, g.mode_map.edges, cfg.heads, lp + ".map");
    ctx.count("decoder.mode2map");
    x = attention_block(ctx, x, nullptr, pe.agent, g.mode_agent.edges, cfg.heads, lp + ".agent");
    ctx.count("decoder.row");
  }
  x = attention_block(ctx, x, nullptr, pe.mode, g.mode_mode.edges, cfg.heads, p + ".mode");
  ctx.count("decoder.column");
  return x;
}

template <typename Scalar>
Var<Scalar> positive_scale(const Var<Scalar>& raw, const ModelConfig& cfg) {
  return add_scalar(softplus(raw), static_cast<Scalar>(cfg.scale_floor));
}

}  // namespace

template <typename Scalar>
void declare_decoder_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg) {
  const Index d = cfg.hidden;
  const Index chunk = 2 * static_cast<Index>(cfg.chunk_steps);
  const Index full = 2 * static_cast<Index>(cfg.horizon);
  store.add_uniform("dec.propose.seeds", {static_cast<Index>(cfg.modes), d}, 1);
  declare_stage(store, "dec.propose", cfg);
  declare_mlp(store, "dec.propose.loc", d, {d, chunk});
  declare_mlp(store, "dec.propose.scale", d, {d, chunk});

  declare_mlp(store, "dec.refine.anchor_embed", full, {d, d});
  declare_stage(store, "dec.refine", cfg);
  declare_mlp(store, "dec.refine.offset", d, {d, full});
  declare_mlp(store, "dec.refine.scale", d, {d, full});
}

template <typename Scalar>
ProposalOutput<Scalar> propose(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc, const ModelConfig& cfg) {
  const SceneGeometry& g = *enc.geometry;
  const Index ad = g.num_decoder_agents();
  std::vector<Index> seed_rows;
  for (Index k = 0; k < cfg.modes; ++k) seed_rows.insert(seed_rows.end(), static_cast<std::size_t>(ad), k);
  Var<Scalar> x = gather_rows(ctx.param("dec.propose.seeds"), seed_rows);
  const StagePe<Scalar> pe = stage_pe(ctx, g, "dec.propose", cfg);

  std::vector<Var<Scalar>> disp, scales;
  for (int r = 0; r < cfg.recurrent_steps; ++r) {
    try {
      x = stage_stack(ctx, x, enc, pe, "dec.propose", cfg);
      disp.push_back(mlp(ctx, x, "dec.propose.loc"));
      scales.push_back(positive_scale(mlp(ctx, x, "dec.propose.scale"), cfg));
      if (!x.value().allFinite() || !disp.back().value().allFinite() || !scales.back().value().allFinite()) {
        throw NumericError("non-finite output");
      }
    } catch (const NumericError& e) {
      throw NumericError("propose, recurrent step " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  ProposalOutput<Scalar> out;
  out.displacements = concat_cols(std::span<const Var<Scalar>>(disp));
  const std::vector<Index> rows = g.target_rows();
  out.positions = gather_rows(cumsum_steps(out.displacements, 2), rows);
  out.scales = gather_rows(concat_cols(std::span<const Var<Scalar>>(scales)), rows);
  out.embedding = x;
  return out;
}

template <typename Scalar>
RefinementOutput<Scalar> refine(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc,
                                const ProposalOutput<Scalar>& proposal, const ModelConfig& cfg) {
  const SceneGeometry& g = *enc.geometry;
  const std::vector<Index> rows = g.target_rows();
  const Var<Scalar> disp = cfg.detach_anchors ? detach(proposal.displacements) : proposal.displacements;
  RefinementOutput<Scalar> out;
  out.anchors = gather_rows(cumsum_steps(disp, 2), rows);
  try {
    Var<Scalar> y = mlp(ctx, disp, "dec.refine.anchor_embed");
    y = stage_stack(ctx, y, enc, stage_pe(ctx, g, "dec.refine", cfg), "dec.refine", cfg);
    out.positions = add(out.anchors, gather_rows(mlp(ctx, y, "dec.refine.offset"), rows));
    out.scales = gather_rows(positive_scale(mlp(ctx, y, "dec.refine.scale"), cfg), rows);
    out.mode_emb = gather_rows(y, rows);
    if (!out.positions.value().allFinite() || !out.scales.value().allFinite()) throw NumericError("non-finite output");
  } catch (const NumericError& e) {
    throw NumericError(std::string("refine: ") + e.what());
  }
  return out;
}

template <typename Scalar>
DecoderOutput<Scalar> decode(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc, const ModelConfig& cfg) {
  DecoderOutput<Scalar> out;
  out.proposal = propose(ctx, enc, cfg);
  out.refinement = refine(ctx, enc, out.proposal, cfg);
  return out;
}

namespace {

template <typename Scalar>
std::vector<std::vector<Trajectory>> unpack(const Matrix<Scalar>& m, const SceneGeometry& g, int modes, bool world) {
  const Index at = g.num_targets();
  const Index steps = m.cols() / 2;
  std::vector<std::vector<Trajectory>> out(static_cast<std::size_t>(modes));
  for (Index k = 0; k < modes; ++k) {
    for (Index j = 0; j < at; ++j) {
      const LocalFrame& f = g.current_frames[static_cast<std::size_t>(g.target_agents[static_cast<std::size_t>(j)])];
      Trajectory traj;
      traj.reserve(static_cast<std::size_t>(steps));
      for (Index t = 0; t < steps; ++t) {
        const Point2 p(static_cast<double>(m(k * at + j, 2 * t)), static_cast<double>(m(k * at + j, 2 * t + 1)));
        traj.push_back(world ? to_world(f, p) : p);
      }
      out[static_cast<std::size_t>(k)].push_back(std::move(traj));
    }
  }
  return out;
}

}  // namespace

template <typename Scalar>
JointPrediction to_joint_prediction(const Scene& scene, const SceneGeometry& g, const DecoderOutput<Scalar>& out,
                                    std::vector<double> pi) {
  const int modes = static_cast<int>(g.num_modes);
  if (pi.empty()) pi.assign(static_cast<std::size_t>(modes), 1.0 / modes);
  if (static_cast<int>(pi.size()) != modes) throw DimensionError("to_joint_prediction: pi length differs from K");
  JointPrediction jp;
  jp.refined.scenario_id = scene.scenario_id;
  jp.refined.pi = std::move(pi);
  for (Index j : g.target_agents) {
    jp.refined.agent_ids.push_back(
        scene.agents[static_cast<std::size_t>(g.decoder_agents[static_cast<std::size_t>(j)])].id);
  }
  jp.refined.modes = unpack(out.refinement.positions.value(), g, modes, true);
  jp.proposal = unpack(out.proposal.positions.value(), g, modes, true);
  jp.scales = unpack(out.refinement.scales.value(), g, modes, false);
  return jp;
}

#define JOINTCAST_INSTANTIATE(S)                                                                                   \
  template void declare_decoder_parameters<S>(ParameterStore<S>&, const ModelConfig&);                            \
  template ProposalOutput<S> propose<S>(const Context<S>&, const SceneEncoding<S>&, const ModelConfig&);           \
  template RefinementOutput<S> refine<S>(const Context<S>&, const SceneEncoding<S>&, const ProposalOutput<S>&,     \
                                         const ModelConfig&);                                                      \
  template DecoderOutput<S> decode<S>(const Context<S>&, const SceneEncoding<S>&, const ModelConfig&);             \
  template JointPrediction to_joint_prediction<S>(const Scene&, const SceneGeometry&, const DecoderOutput<S>&, \
                                                  std::vector<double>);
JOINTCAST_INSTANTIATE(float)
JOINTCAST_INSTANTIATE(double)
#undef JOINTCAST_INSTANTIATE

}  // namespace jointcast
