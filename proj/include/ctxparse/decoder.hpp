#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxparse/context_rep.hpp"
#include "ctxparse/corpus.hpp"
#include "ctxparse/nn.hpp"
#include "ctxparse/tensor.hpp"

namespace ctxparse {

/// Output token space: the fixed keyword list (EOS first) followed by the
/// current schema's headers in header order. Literals all surface as "1".
const std::vector<std::string>& decoder_keywords();
constexpr int kDecoderEos = 0;

int decoder_vocab_size(const Schema& schema);

/// Gold SQL -> decoder ids with a trailing EOS. Identifiers resolve against
/// the schema (bare table name -> star header, bare column name -> first
/// matching header); literals map to the "1" keyword. Unresolvable tokens
/// raise SQLParseError.
std::vector<int> sql_to_decoder_ids(const std::string& sql,
                                    const Schema& schema);

/// Decoder ids -> SQL text. EOS stops rendering; headers print as
/// "table.column" or the bare table name.
std::string decoder_ids_to_sql(const std::vector<int>& ids,
                               const Schema& schema);

struct DecoderParams {
  bool editing = false;
  int hidden = 0;
  Tensor keyword_table;   // [keywords + 1, hidden]; last row embeds <go>
  LstmParams lstm;        // input [token ; context]
  DattnParams attn_u;     // over fused token states
  DattnParams attn_s;     // over fused header states
  DattnParams attn_sql;   // over previous-query states (editing only)
  Tensor w_o;             // [hidden + context, hidden]
  Tensor w_sql, b_sql;    // [hidden, keywords], [1, keywords]
  Tensor w_col;           // [hidden, hidden]
  Tensor w_copy, b_copy;  // [context, 1], [1, 1] (editing only)
  BiLstmParams sql_encoder;  // previous-query Bi-LSTM (editing only)

  int context_width() const { return (editing ? 3 : 2) * hidden; }
  int go_token() const;

  static DecoderParams create(ParamStore& store, const std::string& prefix,
                              int hidden, bool editing, Rng& rng);
};

/// Fixed per-turn inputs for decoding: fused states plus the encoded
/// previous query when editing.
struct DecoderContext {
  Tensor h_u;  // [tokens, hidden]
  Tensor h_s;  // [headers, hidden]
  std::vector<Tensor> prev_sql_states;  // empty on the first turn
  std::vector<int> prev_sql_ids;        // decoder ids, aligned with states
};

/// Per-token states of the previous query: keywords embed through the
/// keyword table, headers through their fused schema rows, then a Bi-LSTM.
std::vector<Tensor> encode_prev_sql(Tape& tape, const DecoderParams& params,
                                    const std::vector<int>& prev_ids,
                                    const Tensor& h_s);

struct ContextVector {
  Tensor c;          // [1, context_width]
  Tensor sql_alpha;  // attention over previous-query positions, if any
};

/// Undecayed attention of the decoder state over token, header, and
/// (optionally) previous-query states, concatenated. Without previous-query
/// states in editing mode the SQL slot is zero.
ContextVector compute_context(Tape& tape, const DecoderParams& params,
                              const Tensor& h_d, const DecoderContext& ctx);

/// Joint softmax over keyword scores and header scores.
Tensor output_distribution(Tape& tape, const DecoderParams& params,
                           const Tensor& o_k, const Tensor& h_s);

/// p_copy * P_prev + (1 - p_copy) * P_gen with p_copy from the context
/// vector. Without a previous-query distribution: editing raises
/// NoPreviousQuery; otherwise generation passes through (p_copy = 0).
Tensor edit_mixture(Tape& tape, const DecoderParams& params, const Tensor& c_k,
                    const std::optional<Tensor>& p_prev, const Tensor& p_gen);

struct DecoderStepOut {
  LstmState state;
  Tensor dist;  // [1, vocab] probabilities
};

/// One decode step: context from the previous state, LSTM over
/// [token embedding ; context], then the (optionally copy-mixed) output
/// distribution.
DecoderStepOut decode_step(Tape& tape, const DecoderParams& params,
                           const DecoderContext& ctx, const LstmState& prev,
                           const Tensor& token_embedding);

/// Embedding fed back for a just-produced token: keyword row or fused
/// header row.
Tensor decoder_token_embedding(Tape& tape, const DecoderParams& params,
                               const Tensor& h_s, int token_id);

/// Sum of -log P(gold token) over the sequence; gold_ids must end with EOS.
Tensor teacher_forced_nll(Tape& tape, const DecoderParams& params,
                          const DecoderContext& ctx,
                          const std::vector<int>& gold_ids);

struct BeamCandidate {
  std::vector<int> ids;
  double score = 0.0;  // sum of per-step log probabilities
  bool finished = false;
};

/// Beam search with deterministic ordering: score descending, then token
/// ids lexicographically. Grad recording is suspended for the search.
std::vector<BeamCandidate> beam_search(Tape& tape, const DecoderParams& params,
                                       const DecoderContext& ctx,
                                       int beam_size, int max_len);

}  // namespace ctxparse
