#include "ctxparse/context_rep.hpp"

#include <cmath>

#include "ctxparse/errors.hpp"

namespace ctxparse {

DattnParams DattnParams::create(ParamStore& store, const std::string& prefix,
                                int dim, Rng& rng) {
  DattnParams p;
  p.w_att = store.create(prefix + ".w_att", {dim, dim}, rng);
  return p;
}

AttnResult dattn(Tape& tape, const Tensor& h_q, const Tensor& h_k,
                 const Tensor& m, const DattnParams& params) {
  if (m.rows() != 1 || m.cols() != h_k.rows()) {
    throw ShapeMismatch("dattn: decay length must match key count");
  }
  Tensor scores = tape.matmul_nt(tape.matmul(h_q, params.w_att), h_k);
  AttnResult out;
  out.alpha = tape.softmax_rows(tape.col_scale(scores, m));
  out.output = tape.matmul(out.alpha, h_k);
  return out;
}

DcriParams DcriParams::create(ParamStore& store, const std::string& prefix,
                              int dim, Rng& rng) {
  DcriParams p;
  p.schema_self = DattnParams::create(store, prefix + ".inner", dim, rng);
  p.token_over_schema = DattnParams::create(store, prefix + ".tok_sch", dim,
                                            rng);
  p.schema_over_token = DattnParams::create(store, prefix + ".sch_tok", dim,
                                            rng);
  return p;
}

AttnResult schema_inner(Tape& tape, const Tensor& h_s,
                        const DcriParams& params) {
  if (h_s.rows() < 1) throw EmptyInput("schema_inner with no headers");
  Tensor ones =
      Tensor::constant({1, h_s.rows()}, std::vector<double>(h_s.rows(), 1.0));
  return dattn(tape, h_s, h_s, ones, params.schema_self);
}

namespace {

/// dattn variant for the printed pairing: the decay has query length, so it
/// scales score rows instead of key columns.
AttnResult dattn_query_scaled(Tape& tape, const Tensor& h_q, const Tensor& h_k,
                              const Tensor& m_q, const DattnParams& params) {
  if (m_q.rows() != 1 || m_q.cols() != h_q.rows()) {
    throw ShapeMismatch("dattn: decay length must match query count");
  }
  Tensor scores = tape.matmul_nt(tape.matmul(h_q, params.w_att), h_k);
  AttnResult out;
  out.alpha = tape.softmax_rows(tape.row_scale(scores, m_q));
  out.output = tape.matmul(out.alpha, h_k);
  return out;
}

}  // namespace

CoAttentionResult co_attention(Tape& tape, const Tensor& h_u,
                               const Tensor& h_s, const Tensor& m_iu,
                               const Tensor& m_s, const DcriParams& params,
                               CoAttentionMode mode) {
  CoAttentionResult out;
  if (mode == CoAttentionMode::KEY_ALIGNED) {
    out.token_side = dattn(tape, h_u, h_s, m_s, params.token_over_schema);
    out.schema_side = dattn(tape, h_s, h_u, m_iu, params.schema_over_token);
  } else {
    out.token_side =
        dattn_query_scaled(tape, h_u, h_s, m_iu, params.token_over_schema);
    out.schema_side =
        dattn_query_scaled(tape, h_s, h_u, m_s, params.schema_over_token);
  }
  return out;
}

DcreLayerParams DcreLayerParams::create(ParamStore& store,
                                        const std::string& prefix, int d_z,
                                        int heads, Rng& rng) {
  if (heads <= 0 || d_z <= 0 || d_z % heads != 0) {
    throw ConfigError("model width must divide evenly across heads");
  }
  DcreLayerParams p;
  p.heads = heads;
  p.d_z = d_z;
  p.w_q = store.create(prefix + ".w_q", {d_z, d_z}, rng);
  p.w_k = store.create(prefix + ".w_k", {d_z, d_z}, rng);
  p.w_v = store.create(prefix + ".w_v", {d_z, d_z}, rng);
  int head_dim = d_z / heads;
  p.g_key = store.create(prefix + ".g_key", {kNumRelationTypes, head_dim}, rng);
  p.g_value =
      store.create(prefix + ".g_value", {kNumRelationTypes, head_dim}, rng);
  p.ffn_w1 = store.create(prefix + ".ffn_w1", {d_z, 4 * d_z}, rng);
  p.ffn_b1 = store.create_zeros(prefix + ".ffn_b1", {1, 4 * d_z});
  p.ffn_w2 = store.create(prefix + ".ffn_w2", {4 * d_z, d_z}, rng);
  p.ffn_b2 = store.create_zeros(prefix + ".ffn_b2", {1, d_z});
  p.ln_gain = store.create_zeros(prefix + ".ln_gain", {1, d_z});
  p.ln_gain.values().assign(static_cast<std::size_t>(d_z), 1.0);
  p.ln_bias = store.create_zeros(prefix + ".ln_bias", {1, d_z});
  return p;
}

DcreOut dcre_layer(Tape& tape, const Tensor& h_r,
                   const std::vector<int>& relations, const Tensor& m,
                   const DcreLayerParams& params) {
  const int n = h_r.rows();
  if (h_r.cols() != params.d_z) {
    throw ShapeMismatch("dcre_layer: node width does not match model width");
  }
  if (m.rows() != 1 || m.cols() != n) {
    throw ShapeMismatch("dcre_layer: decay length must match node count");
  }
  if (relations.size() != static_cast<std::size_t>(n) * n) {
    throw ShapeMismatch("dcre_layer: relation matrix must be node x node");
  }
  for (int rel : relations) {
    if (rel < 0 || rel >= kNumRelationTypes) {
      throw UnknownRelationId("relation id " + std::to_string(rel) +
                              " outside the known relation types");
    }
  }

  const int head_dim = params.d_z / params.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q_all = tape.matmul(h_r, params.w_q);
  Tensor k_all = tape.matmul(h_r, params.w_k);
  Tensor v_all = tape.matmul(h_r, params.w_v);

  DcreOut out;
  std::vector<Tensor> head_outputs;
  for (int h = 0; h < params.heads; ++h) {
    Tensor q = tape.slice_cols(q_all, h * head_dim, (h + 1) * head_dim);
    Tensor k = tape.slice_cols(k_all, h * head_dim, (h + 1) * head_dim);
    Tensor v = tape.slice_cols(v_all, h * head_dim, (h + 1) * head_dim);

    // e_ij = q_i.(k_j + g_key[rel(i,j)]*m_i) / sqrt(head_dim); the relation
    // term is gathered from q.g_key^T per pair and scaled by the query row's
    // decay.
    Tensor qg = tape.matmul_nt(q, params.g_key);  // [n, relation types]
    Tensor rel_scores = tape.gather_cols(qg, relations, n);
    Tensor scores = tape.scale(
        tape.add(tape.matmul_nt(q, k), tape.row_scale(rel_scores, m)),
        inv_sqrt);
    Tensor alpha = tape.softmax_rows(scores);

    // z_i = sum_j alpha_ij (v_j + g_value[rel(i,j)]*m_i); the relation part
    // pools alpha mass per relation type, multiplies into the table, and is
    // scaled by the query row's decay.
    Tensor pooled = tape.sum_cols_by_group(alpha, relations,
                                           kNumRelationTypes);
    Tensor rel_values = tape.row_scale(tape.matmul(pooled, params.g_value), m);
    head_outputs.push_back(tape.add(tape.matmul(alpha, v), rel_values));

    out.scores.push_back(scores);
    out.alphas.push_back(alpha);
  }
  Tensor z = head_outputs.size() == 1 ? head_outputs.front()
                                      : tape.concat_cols(head_outputs);
  Tensor normed =
      tape.layer_norm(tape.add(h_r, z), params.ln_gain, params.ln_bias);
  Tensor inner = tape.relu(tape.add_row_broadcast(
      tape.matmul(normed, params.ffn_w1), params.ffn_b1));
  out.r_e = tape.add_row_broadcast(tape.matmul(inner, params.ffn_w2),
                                   params.ffn_b2);
  return out;
}

FuseParams FuseParams::create(ParamStore& store, const std::string& prefix,
                              int dim, Rng& rng) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ConfigError("fuse width must be positive and even");
  }
  FuseParams p;
  p.token_fuse =
      BiLstmParams::create(store, prefix + ".token", 3 * dim, dim / 2, rng);
  p.header_fuse =
      BiLstmParams::create(store, prefix + ".header", 3 * dim, dim / 2, rng);
  return p;
}

namespace {

Tensor bilstm_over_rows(Tape& tape, const Tensor& rows,
                        const BiLstmParams& params) {
  std::vector<Tensor> xs;
  xs.reserve(rows.rows());
  for (int i = 0; i < rows.rows(); ++i) {
    xs.push_back(tape.slice_rows(rows, i, i + 1));
  }
  BiLstmOut run = bilstm_run(tape, xs, params);
  return run.steps.size() == 1 ? run.steps.front()
                               : tape.concat_rows(run.steps);
}

}  // namespace

FusedStates fuse(Tape& tape, const Tensor& h_u, const Tensor& h_s,
                 const Tensor& r_iu, const Tensor& r_is, const Tensor& r_e,
                 const FuseParams& params) {
  const int t = h_u.rows(), s = h_s.rows();
  if (r_iu.rows() != t || r_is.rows() != s || r_e.rows() != t + s) {
    throw ShapeMismatch("fuse: row counts must split at the token boundary");
  }
  Tensor r_eu = tape.slice_rows(r_e, 0, t);
  Tensor r_es = tape.slice_rows(r_e, t, t + s);
  FusedStates out;
  out.h_u = bilstm_over_rows(tape, tape.concat_cols({h_u, r_iu, r_eu}),
                             params.token_fuse);
  out.h_s = bilstm_over_rows(tape, tape.concat_cols({h_s, r_is, r_es}),
                             params.header_fuse);
  return out;
}

ContextRepParams ContextRepParams::create(ParamStore& store,
                                          const std::string& prefix, int dim,
                                          int heads, Rng& rng) {
  ContextRepParams p;
  p.dcri = DcriParams::create(store, prefix + ".dcri", dim, rng);
  p.dcre = DcreLayerParams::create(store, prefix + ".dcre", dim, heads, rng);
  p.fusion = FuseParams::create(store, prefix + ".fuse", dim, rng);
  return p;
}

ContextRepresentation build_context_representation(
    Tape& tape, const Tensor& h_u, const Tensor& h_s,
    const std::vector<int>& relations, const DecayVector& decay,
    const ContextRepParams& params, CoAttentionMode mode) {
  ContextRepresentation rep;
  rep.inner = schema_inner(tape, h_s, params.dcri);
  rep.implicit = co_attention(tape, h_u, rep.inner.output, decay.m_iu,
                              decay.m_s, params.dcri, mode);
  Tensor h_r = tape.concat_rows({h_u, h_s});
  rep.explicit_rep = dcre_layer(tape, h_r, relations, decay.m, params.dcre);
  rep.fused = fuse(tape, h_u, h_s, rep.implicit.token_side.output,
                   rep.implicit.schema_side.output, rep.explicit_rep.r_e,
                   params.fusion);
  return rep;
}

}  // namespace ctxparse
