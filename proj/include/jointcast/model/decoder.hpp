#pragma once

#include "jointcast/model/encoder.hpp"
#include "jointcast/model/prediction.hpp"

namespace jointcast {

/// Outputs of the recurrent proposal stage. Trajectory rows are mode-major
/// over targets (k*A' + j) with columns x0 y0 x1 y1 ... in the target's
/// current frame.
template <typename Scalar>
struct ProposalOutput {
  Var<Scalar> displacements;  // [K*Ad, 2T'] per-step, every decoder agent
  Var<Scalar> positions;      // [K*A', 2T']
  Var<Scalar> scales;         // [K*A', 2T']
  Var<Scalar> embedding;      // [K*Ad, D] after the last recurrent step
};

template <typename Scalar>
struct RefinementOutput {
  Var<Scalar> anchors;    // [K*A', 2T'] detached proposal positions
  Var<Scalar> positions;  // [K*A', 2T'] anchors + offsets
  Var<Scalar> scales;     // [K*A', 2T']
  Var<Scalar> mode_emb;   // [K*A', D]
};

template <typename Scalar>
struct DecoderOutput {
  ProposalOutput<Scalar> proposal;
  RefinementOutput<Scalar> refinement;
};

template <typename Scalar>
void declare_decoder_parameters(ParameterStore<Scalar>& store, const ModelConfig& cfg);

/// Names of parameters owned by the proposal stage.
inline bool is_proposal_parameter(const std::string& name) { return name.rfind("dec.propose.", 0) == 0; }

template <typename Scalar>
ProposalOutput<Scalar> propose(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc, const ModelConfig& cfg);

template <typename Scalar>
RefinementOutput<Scalar> refine(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc,
                                const ProposalOutput<Scalar>& proposal, const ModelConfig& cfg);

template <typename Scalar>
DecoderOutput<Scalar> decode(const Context<Scalar>& ctx, const SceneEncoding<Scalar>& enc, const ModelConfig& cfg);

/// World-frame prediction for the targets of `scene`; pi is uniform when `pi` is empty.
template <typename Scalar>
JointPrediction to_joint_prediction(const Scene& scene, const SceneGeometry& geom, const DecoderOutput<Scalar>& out,
                                    std::vector<double> pi = {});

}  // namespace jointcast
