#pragma once

#include <string>
#include <vector>

#include "ctxparse/decay.hpp"
#include "ctxparse/nn.hpp"
#include "ctxparse/schema_graph.hpp"
#include "ctxparse/tensor.hpp"

namespace ctxparse {

struct DattnParams {
  Tensor w_att;  // [d, d]

  static DattnParams create(ParamStore& store, const std::string& prefix,
                            int dim, Rng& rng);
};

struct AttnResult {
  Tensor output;  // [n_q, d]
  Tensor alpha;   // [n_q, n_k], rows sum to 1
};

/// Decayed bilinear attention: alpha = softmax((h_q.W.h_k^T) ⊙ m) row-wise,
/// with m applied to the pre-softmax scores of each key column.
AttnResult dattn(Tape& tape, const Tensor& h_q, const Tensor& h_k,
                 const Tensor& m, const DattnParams& params);

struct DcriParams {
  DattnParams schema_self;        // headers over headers
  DattnParams token_over_schema;  // r^IU
  DattnParams schema_over_token;  // r^IS

  static DcriParams create(ParamStore& store, const std::string& prefix,
                           int dim, Rng& rng);
};

/// Header-over-header attention with all decay values fixed at 1.
AttnResult schema_inner(Tape& tape, const Tensor& h_s,
                        const DcriParams& params);

/// The co-attention equations pair each decay vector with the opposite
/// side's keys, which cannot align by length. KEY_ALIGNED pairs each key
/// sequence with its own decay (the default); AS_PRINTED_SWAPPED keeps the
/// printed pairing by scaling score rows with the query side's decay.
enum class CoAttentionMode { KEY_ALIGNED, AS_PRINTED_SWAPPED };

struct CoAttentionResult {
  AttnResult token_side;   // r^IU rows, one per token
  AttnResult schema_side;  // r^IS rows, one per header
};

CoAttentionResult co_attention(Tape& tape, const Tensor& h_u,
                               const Tensor& h_s, const Tensor& m_iu,
                               const Tensor& m_s, const DcriParams& params,
                               CoAttentionMode mode);

struct DcreLayerParams {
  int heads = 1;
  int d_z = 0;
  Tensor w_q, w_k, w_v;     // [d_z, d_z], sliced per head
  Tensor g_key, g_value;    // [relation types, d_z/heads], shared across heads
  Tensor ffn_w1, ffn_b1;    // [d_z, 4*d_z], [1, 4*d_z]
  Tensor ffn_w2, ffn_b2;    // [4*d_z, d_z], [1, d_z]
  Tensor ln_gain, ln_bias;  // [1, d_z]

  /// d_z must divide evenly across heads.
  static DcreLayerParams create(ParamStore& store, const std::string& prefix,
                                int d_z, int heads, Rng& rng);
};

struct DcreOut {
  Tensor r_e;                  // [n, d_z]
  std::vector<Tensor> scores;  // per head, [n, n] pre-softmax
  std::vector<Tensor> alphas;  // per head, [n, n]
};

/// Relation-decayed multi-head layer over the node sequence h_r (tokens then
/// headers, matching relation_matrix order). Per head, the score adds the
/// key-side relation embedding scaled by the query's decay, and the output
/// adds the value-side relation embedding the same way; the result is
/// FFN(LayerNorm(h_r + heads)).
DcreOut dcre_layer(Tape& tape, const Tensor& h_r,
                   const std::vector<int>& relations, const Tensor& m,
                   const DcreLayerParams& params);

struct FuseParams {
  BiLstmParams token_fuse;   // over [h^U ; r^IU ; r^EU] rows
  BiLstmParams header_fuse;  // over [h^S ; r^IS ; r^ES] rows

  static FuseParams create(ParamStore& store, const std::string& prefix,
                           int dim, Rng& rng);
};

struct FusedStates {
  Tensor h_u;  // [tokens, d]
  Tensor h_s;  // [headers, d]
};

FusedStates fuse(Tape& tape, const Tensor& h_u, const Tensor& h_s,
                 const Tensor& r_iu, const Tensor& r_is, const Tensor& r_e,
                 const FuseParams& params);

struct ContextRepParams {
  DcriParams dcri;
  DcreLayerParams dcre;
  FuseParams fusion;

  static ContextRepParams create(ParamStore& store, const std::string& prefix,
                                 int dim, int heads, Rng& rng);
};

struct ContextRepresentation {
  AttnResult inner;            // header self-attention behind the co-attention
  CoAttentionResult implicit;  // r^IU / r^IS with their alpha matrices
  DcreOut explicit_rep;        // r^E with per-head scores and alphas
  FusedStates fused;
};

/// Full stack for one turn: header self-attention, co-attention between
/// tokens and the updated headers, the relation-decayed layer over all
/// nodes, and the fusing Bi-LSTMs.
ContextRepresentation build_context_representation(
    Tape& tape, const Tensor& h_u, const Tensor& h_s,
    const std::vector<int>& relations, const DecayVector& decay,
    const ContextRepParams& params, CoAttentionMode mode);

}  // namespace ctxparse
