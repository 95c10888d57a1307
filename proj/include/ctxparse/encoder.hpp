#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctxparse/corpus.hpp"
#include "ctxparse/nn.hpp"
#include "ctxparse/tensor.hpp"

namespace ctxparse {

enum class EmbeddingMode { TRAINABLE_LOOKUP, PRECOMPUTED_FILE };

struct PrecomputedRecord {
  int length = 0;
  int dimension = 0;
  std::vector<double> values;  // row-major [length, dimension]
};

/// Per-example precomputed vectors keyed by example id ("<interaction>:<turn>").
using PrecomputedEmbeddings = std::map<std::string, PrecomputedRecord>;

void save_precomputed_embeddings(const std::string& path,
                                 const PrecomputedEmbeddings& records);
PrecomputedEmbeddings load_precomputed_embeddings(const std::string& path);

/// Source of input vectors. TRAINABLE_LOOKUP embeds vocabulary ids through a
/// learned table; PRECOMPUTED_FILE injects externally computed vectors, one
/// per position of the input concatenation.
struct EmbeddingProvider {
  EmbeddingMode mode = EmbeddingMode::TRAINABLE_LOOKUP;
  int dimension = 0;
  Tensor table;                // [vocab, dimension], lookup mode only
  const Vocab* vocab = nullptr;
  PrecomputedEmbeddings records;
};

EmbeddingProvider make_lookup_provider(ParamStore& store, const Vocab& vocab,
                                       int dimension, Rng& rng);
EmbeddingProvider make_precomputed_provider(const std::string& path,
                                            int dimension);

/// Position bookkeeping for [CLS], x_1...x_i, [SEP], s_1, [SEP], ..., s_m,
/// [SEP]: utterance turns run back to back with a single separator after the
/// last one; every header is followed by its own separator.
struct ConcatLayout {
  int length = 0;
  int cls_position = 0;
  std::vector<std::vector<int>> token_positions;         // per turn
  int utterance_sep_position = 0;
  std::vector<std::vector<int>> header_token_positions;  // per header
  std::vector<int> header_sep_positions;                 // per header
};

ConcatLayout concat_layout(const std::vector<std::vector<std::string>>& turns,
                           const std::vector<SchemaHeader>& headers);

struct EmbeddedInput {
  std::vector<Tensor> vectors;  // one [1, dimension] row per position
  ConcatLayout layout;
};

/// Embed the full concatenation for turns 1..i. example_id selects the
/// record in PRECOMPUTED_FILE mode and is ignored otherwise.
EmbeddedInput embed_concatenated_input(
    Tape& tape, const std::vector<std::vector<std::string>>& turns,
    const std::vector<SchemaHeader>& headers, const EmbeddingProvider& provider,
    const std::string& example_id = "");

struct EncoderParams {
  BiLstmParams utterance;   // over token vectors, d/2 per direction
  LstmParams interaction;   // over utterance vectors, hidden d
  LstmParams enrich;        // over [token vector ; interaction state], hidden d
  BiLstmParams schema;      // over header token vectors, d/2 per direction
  int embed_dim = 0;
  int hidden = 0;

  /// hidden must be even (it splits across Bi-LSTM directions).
  static EncoderParams create(ParamStore& store, int embed_dim, int hidden,
                              Rng& rng);
};

struct UtteranceEncoding {
  std::vector<Tensor> token_states;  // final per-token states, [1, hidden]
  Tensor utterance_vector;           // [1, 2*hidden]
};

/// One turn: a Bi-LSTM over the token vectors yields the utterance vector
/// (first/last state concatenation); the final token states come from a
/// second pass where each token vector is concatenated with the previous
/// interaction state.
UtteranceEncoding encode_utterance(Tape& tape, const EncoderParams& params,
                                   const std::vector<Tensor>& token_vectors,
                                   const Tensor& interaction_state_prev);

/// One interaction-LSTM step over the utterance vector.
LstmState update_interaction_state(Tape& tape, const EncoderParams& params,
                                   const Tensor& utterance_vector,
                                   const LstmState& prev);

/// Final-state concatenation of a Bi-LSTM over each header's tokens.
std::vector<Tensor> encode_schema(
    Tape& tape, const EncoderParams& params,
    const std::vector<std::vector<Tensor>>& header_token_vectors);

/// Everything downstream modules need about one encoded turn.
struct EncoderState {
  std::vector<Tensor> utterance_token_states;  // current turn, [1, hidden]
  Tensor utterance_vector;                     // [1, 2*hidden]
  LstmState interaction;                       // h is h^I after this turn
  std::vector<Tensor> schema_states;           // per header, [1, hidden]
};

}  // namespace ctxparse
