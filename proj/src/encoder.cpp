#include "ctxparse/encoder.hpp"

#include <cstdint>
#include <fstream>

#include "ctxparse/errors.hpp"

namespace ctxparse {

namespace {

const char kEmbMagic[] = "CTXPARSE-EMB-1";

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ParseError("truncated embedding file");
  return v;
}

}  // namespace

void save_precomputed_embeddings(const std::string& path,
                                 const PrecomputedEmbeddings& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open embedding file for writing: " + path);
  out << kEmbMagic << '\n';
  write_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [id, rec] : records) {
    write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_u32(out, static_cast<std::uint32_t>(rec.length));
    write_u32(out, static_cast<std::uint32_t>(rec.dimension));
    out.write(reinterpret_cast<const char*>(rec.values.data()),
              static_cast<std::streamsize>(rec.values.size() * sizeof(double)));
  }
}

PrecomputedEmbeddings load_precomputed_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embedding file: " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kEmbMagic) throw ParseError("bad embedding file magic");
  PrecomputedEmbeddings records;
  std::uint32_t count = read_u32(in);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t id_len = read_u32(in);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    if (!in) throw ParseError("truncated embedding file");
    PrecomputedRecord rec;
    rec.length = static_cast<int>(read_u32(in));
    rec.dimension = static_cast<int>(read_u32(in));
    rec.values.resize(static_cast<std::size_t>(rec.length) * rec.dimension);
    in.read(reinterpret_cast<char*>(rec.values.data()),
            static_cast<std::streamsize>(rec.values.size() * sizeof(double)));
    if (!in) throw ParseError("truncated embedding file");
    if (records.count(id)) throw ParseError("duplicate embedding id: " + id);
    records.emplace(std::move(id), std::move(rec));
  }
  return records;
}

EmbeddingProvider make_lookup_provider(ParamStore& store, const Vocab& vocab,
                                       int dimension, Rng& rng) {
  EmbeddingProvider p;
  p.mode = EmbeddingMode::TRAINABLE_LOOKUP;
  p.dimension = dimension;
  p.vocab = &vocab;
  p.table = store.create("embed.table",
                         {static_cast<int>(vocab.size()), dimension}, rng);
  return p;
}

EmbeddingProvider make_precomputed_provider(const std::string& path,
                                            int dimension) {
  EmbeddingProvider p;
  p.mode = EmbeddingMode::PRECOMPUTED_FILE;
  p.dimension = dimension;
  p.records = load_precomputed_embeddings(path);
  return p;
}

ConcatLayout concat_layout(const std::vector<std::vector<std::string>>& turns,
                           const std::vector<SchemaHeader>& headers) {
  if (turns.empty()) throw EmptyInput("concat layout needs at least one turn");
  ConcatLayout layout;
  int pos = 0;
  layout.cls_position = pos++;
  for (const auto& turn : turns) {
    if (turn.empty()) throw EmptyInput("concat layout over an empty turn");
    std::vector<int> positions;
    for (std::size_t k = 0; k < turn.size(); ++k) positions.push_back(pos++);
    layout.token_positions.push_back(std::move(positions));
  }
  layout.utterance_sep_position = pos++;
  for (const auto& header : headers) {
    if (header.tokens.empty()) throw EmptyHeader(header.text);
    std::vector<int> positions;
    for (std::size_t k = 0; k < header.tokens.size(); ++k) {
      positions.push_back(pos++);
    }
    layout.header_token_positions.push_back(std::move(positions));
    layout.header_sep_positions.push_back(pos++);
  }
  layout.length = pos;
  return layout;
}

EmbeddedInput embed_concatenated_input(
    Tape& tape, const std::vector<std::vector<std::string>>& turns,
    const std::vector<SchemaHeader>& headers, const EmbeddingProvider& provider,
    const std::string& example_id) {
  EmbeddedInput out;
  out.layout = concat_layout(turns, headers);
  const int n = out.layout.length;
  out.vectors.resize(n);

  if (provider.mode == EmbeddingMode::PRECOMPUTED_FILE) {
    auto it = provider.records.find(example_id);
    if (it == provider.records.end()) {
      throw UnknownInteraction("no precomputed embedding for id: " +
                               example_id);
    }
    const PrecomputedRecord& rec = it->second;
    if (rec.length != n || rec.dimension != provider.dimension) {
      throw DimensionMismatch("precomputed embedding disagrees with layout");
    }
    for (int p = 0; p < n; ++p) {
      auto begin = rec.values.begin() +
                   static_cast<std::ptrdiff_t>(p) * rec.dimension;
      out.vectors[p] = Tensor::constant(
          {1, rec.dimension}, std::vector<double>(begin, begin + rec.dimension));
    }
    return out;
  }

  if (provider.vocab == nullptr || !provider.table.defined()) {
    throw ConfigError("lookup provider has no vocabulary table");
  }
  std::vector<int> ids(n, Vocab::kSep);
  ids[out.layout.cls_position] = Vocab::kCls;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    for (std::size_t k = 0; k < turns[t].size(); ++k) {
      ids[out.layout.token_positions[t][k]] = provider.vocab->id_of(turns[t][k]);
    }
  }
  for (std::size_t h = 0; h < headers.size(); ++h) {
    for (std::size_t k = 0; k < headers[h].tokens.size(); ++k) {
      ids[out.layout.header_token_positions[h][k]] =
          provider.vocab->id_of(headers[h].tokens[k]);
    }
  }
  for (int p = 0; p < n; ++p) {
    out.vectors[p] = tape.slice_rows(provider.table, ids[p], ids[p] + 1);
  }
  return out;
}

EncoderParams EncoderParams::create(ParamStore& store, int embed_dim,
                                    int hidden, Rng& rng) {
  if (hidden <= 0 || hidden % 2 != 0) {
    throw ConfigError("encoder hidden size must be positive and even");
  }
  EncoderParams p;
  p.embed_dim = embed_dim;
  p.hidden = hidden;
  p.utterance = BiLstmParams::create(store, "enc.utt", embed_dim, hidden / 2,
                                     rng);
  p.interaction = LstmParams::create(store, "enc.inter", 2 * hidden, hidden,
                                     rng);
  p.enrich = LstmParams::create(store, "enc.enrich", embed_dim + hidden, hidden,
                                rng);
  p.schema = BiLstmParams::create(store, "enc.schema", embed_dim, hidden / 2,
                                  rng);
  return p;
}

UtteranceEncoding encode_utterance(Tape& tape, const EncoderParams& params,
                                   const std::vector<Tensor>& token_vectors,
                                   const Tensor& interaction_state_prev) {
  if (token_vectors.empty()) throw EmptyInput("encode_utterance on no tokens");
  if (interaction_state_prev.cols() != params.hidden) {
    throw ShapeMismatch("interaction state width");
  }
  UtteranceEncoding out;
  BiLstmOut u = bilstm_run(tape, token_vectors, params.utterance);
  out.utterance_vector = u.first_last;
  std::vector<Tensor> enriched;
  enriched.reserve(token_vectors.size());
  for (const Tensor& x : token_vectors) {
    enriched.push_back(tape.concat_cols({x, interaction_state_prev}));
  }
  out.token_states = lstm_run(tape, enriched, params.enrich);
  return out;
}

LstmState update_interaction_state(Tape& tape, const EncoderParams& params,
                                   const Tensor& utterance_vector,
                                   const LstmState& prev) {
  if (utterance_vector.cols() != 2 * params.hidden) {
    throw ShapeMismatch("utterance vector width");
  }
  return lstm_cell(tape, utterance_vector, prev, params.interaction);
}

std::vector<Tensor> encode_schema(
    Tape& tape, const EncoderParams& params,
    const std::vector<std::vector<Tensor>>& header_token_vectors) {
  std::vector<Tensor> out;
  out.reserve(header_token_vectors.size());
  for (const auto& tokens : header_token_vectors) {
    if (tokens.empty()) throw EmptyHeader("schema header with no tokens");
    out.push_back(bilstm_run(tape, tokens, params.schema).final_concat);
  }
  return out;
}

}  // namespace ctxparse
