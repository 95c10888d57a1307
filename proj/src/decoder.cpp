#include "ctxparse/decoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ctxparse/errors.hpp"
#include "ctxparse/sql_clauses.hpp"

namespace ctxparse {

const std::vector<std::string>& decoder_keywords() {
  static const std::vector<std::string> kws = [] {
    std::vector<std::string> v;
    v.push_back("<eos>");
    for (const std::string& kw : Vocab::sql_keywords()) v.push_back(kw);
    return v;
  }();
  return kws;
}

int decoder_vocab_size(const Schema& schema) {
  return static_cast<int>(decoder_keywords().size() + schema.headers.size());
}

namespace {

int keyword_id(const std::string& token) {
  const auto& kws = decoder_keywords();
  for (std::size_t i = 1; i < kws.size(); ++i) {  // EOS is never a surface form
    if (kws[i] == token) return static_cast<int>(i);
  }
  return -1;
}

int literal_id() {
  int id = keyword_id("1");
  return id;
}

int header_id(const Schema& schema, int header_index) {
  return static_cast<int>(decoder_keywords().size()) + header_index;
}

int find_star_header(const Schema& schema, const std::string& table) {
  for (std::size_t h = 0; h < schema.headers.size(); ++h) {
    const SchemaHeader& hd = schema.headers[h];
    if (hd.kind == HeaderKind::TABLE_STAR &&
        schema.tables[hd.table_index] == table) {
      return static_cast<int>(h);
    }
  }
  return -1;
}

int find_column_header(const Schema& schema, const std::string& table,
                       const std::string& column) {
  for (std::size_t h = 0; h < schema.headers.size(); ++h) {
    const SchemaHeader& hd = schema.headers[h];
    if (hd.kind != HeaderKind::COLUMN) continue;
    if (!table.empty() && schema.tables[hd.table_index] != table) continue;
    if (schema.columns[*hd.column_index].second == column) {
      return static_cast<int>(h);
    }
  }
  return -1;
}

}  // namespace

std::vector<int> sql_to_decoder_ids(const std::string& sql,
                                    const Schema& schema) {
  std::vector<std::string> tokens = lex_sql(sql);
  std::vector<int> ids;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::string& tok = tokens[t];
    if (tok == "value" ||
        (!tok.empty() && std::isdigit(static_cast<unsigned char>(tok[0])))) {
      ids.push_back(literal_id());
      continue;
    }
    // "table." followed by "*" is a star reference split by the lexer.
    if (tok.size() > 1 && tok.back() == '.' && t + 1 < tokens.size() &&
        tokens[t + 1] == "*") {
      int star = find_star_header(schema, tok.substr(0, tok.size() - 1));
      if (star < 0) throw SQLParseError("unknown table in: " + tok);
      ids.push_back(header_id(schema, star));
      ++t;
      continue;
    }
    int kw = keyword_id(tok);
    if (kw >= 0) {
      ids.push_back(kw);
      continue;
    }
    std::size_t dot = tok.find('.');
    if (dot != std::string::npos) {
      int h = find_column_header(schema, tok.substr(0, dot),
                                 tok.substr(dot + 1));
      if (h < 0) throw SQLParseError("unknown column reference: " + tok);
      ids.push_back(header_id(schema, h));
      continue;
    }
    int star = find_star_header(schema, tok);
    if (star >= 0) {
      ids.push_back(header_id(schema, star));
      continue;
    }
    int col = find_column_header(schema, "", tok);
    if (col >= 0) {
      ids.push_back(header_id(schema, col));
      continue;
    }
    throw SQLParseError("token outside the decoder vocabulary: " + tok);
  }
  ids.push_back(kDecoderEos);
  return ids;
}

std::string decoder_ids_to_sql(const std::vector<int>& ids,
                               const Schema& schema) {
  const int kw = static_cast<int>(decoder_keywords().size());
  std::string out;
  for (int id : ids) {
    if (id == kDecoderEos) break;
    if (id < 0 || id >= decoder_vocab_size(schema)) {
      throw SQLParseError("decoder id out of range: " + std::to_string(id));
    }
    if (!out.empty()) out += ' ';
    if (id < kw) {
      out += decoder_keywords()[id];
      continue;
    }
    const SchemaHeader& hd = schema.headers[id - kw];
    if (hd.kind == HeaderKind::TABLE_STAR) {
      out += schema.tables[hd.table_index];
    } else {
      out += schema.tables[hd.table_index] + "." +
             schema.columns[*hd.column_index].second;
    }
  }
  return out;
}

int DecoderParams::go_token() const {
  return static_cast<int>(decoder_keywords().size());
}

DecoderParams DecoderParams::create(ParamStore& store,
                                    const std::string& prefix, int hidden,
                                    bool editing, Rng& rng) {
  DecoderParams p;
  p.editing = editing;
  p.hidden = hidden;
  const int kw = static_cast<int>(decoder_keywords().size());
  p.keyword_table = store.create(prefix + ".keyword_table", {kw + 1, hidden},
                                 rng);
  const int ctx = (editing ? 3 : 2) * hidden;
  p.lstm = LstmParams::create(store, prefix + ".lstm", hidden + ctx, hidden,
                              rng);
  p.attn_u = DattnParams::create(store, prefix + ".attn_u", hidden, rng);
  p.attn_s = DattnParams::create(store, prefix + ".attn_s", hidden, rng);
  p.w_o = store.create(prefix + ".w_o", {hidden + ctx, hidden}, rng);
  p.w_sql = store.create(prefix + ".w_sql", {hidden, kw}, rng);
  p.b_sql = store.create_zeros(prefix + ".b_sql", {1, kw});
  p.w_col = store.create(prefix + ".w_col", {hidden, hidden}, rng);
  if (editing) {
    p.attn_sql = DattnParams::create(store, prefix + ".attn_sql", hidden, rng);
    p.w_copy = store.create(prefix + ".w_copy", {ctx, 1}, rng);
    p.b_copy = store.create_zeros(prefix + ".b_copy", {1, 1});
    p.sql_encoder = BiLstmParams::create(store, prefix + ".sql_enc", hidden,
                                         hidden / 2, rng);
  }
  return p;
}

Tensor decoder_token_embedding(Tape& tape, const DecoderParams& params,
                               const Tensor& h_s, int token_id) {
  const int kw = static_cast<int>(decoder_keywords().size());
  if (token_id < 0 || token_id > kw + h_s.rows()) {
    throw ShapeMismatch("decoder token id out of range");
  }
  if (token_id <= kw) {  // keyword or the <go> row right after them
    return tape.slice_rows(params.keyword_table, token_id, token_id + 1);
  }
  return tape.slice_rows(h_s, token_id - kw, token_id - kw + 1);
}

namespace {

Tensor go_embedding(Tape& tape, const DecoderParams& params) {
  int go = params.go_token();
  return tape.slice_rows(params.keyword_table, go, go + 1);
}

Tensor ones_row(int n) {
  return Tensor::constant({1, n}, std::vector<double>(n, 1.0));
}

}  // namespace

std::vector<Tensor> encode_prev_sql(Tape& tape, const DecoderParams& params,
                                    const std::vector<int>& prev_ids,
                                    const Tensor& h_s) {
  if (!params.editing) throw ConfigError("previous-query encoder is disabled");
  if (prev_ids.empty()) throw EmptyInput("previous query has no tokens");
  std::vector<Tensor> xs;
  xs.reserve(prev_ids.size());
  for (int id : prev_ids) {
    xs.push_back(decoder_token_embedding(tape, params, h_s, id));
  }
  return bilstm_run(tape, xs, params.sql_encoder).steps;
}

ContextVector compute_context(Tape& tape, const DecoderParams& params,
                              const Tensor& h_d, const DecoderContext& ctx) {
  if (ctx.h_u.rows() < 1 || ctx.h_s.rows() < 1) {
    throw EmptyInput("decoder context needs token and header states");
  }
  ContextVector out;
  Tensor c_u =
      dattn(tape, h_d, ctx.h_u, ones_row(ctx.h_u.rows()), params.attn_u).output;
  Tensor c_s =
      dattn(tape, h_d, ctx.h_s, ones_row(ctx.h_s.rows()), params.attn_s).output;
  if (!params.editing) {
    out.c = tape.concat_cols({c_u, c_s});
    return out;
  }
  if (ctx.prev_sql_states.empty()) {
    out.c = tape.concat_cols(
        {c_u, c_s, Tensor::zeros({1, params.hidden}, false)});
    return out;
  }
  Tensor prev = ctx.prev_sql_states.size() == 1
                    ? ctx.prev_sql_states.front()
                    : tape.concat_rows(ctx.prev_sql_states);
  AttnResult att =
      dattn(tape, h_d, prev, ones_row(prev.rows()), params.attn_sql);
  out.sql_alpha = att.alpha;
  out.c = tape.concat_cols({c_u, c_s, att.output});
  return out;
}

Tensor output_distribution(Tape& tape, const DecoderParams& params,
                           const Tensor& o_k, const Tensor& h_s) {
  Tensor m_sql = tape.add(tape.matmul(o_k, params.w_sql), params.b_sql);
  Tensor m_col = tape.matmul_nt(tape.matmul(o_k, params.w_col), h_s);
  return tape.softmax_rows(tape.concat_cols({m_sql, m_col}));
}

Tensor edit_mixture(Tape& tape, const DecoderParams& params, const Tensor& c_k,
                    const std::optional<Tensor>& p_prev, const Tensor& p_gen) {
  if (!p_prev.has_value()) {
    if (params.editing) {
      throw NoPreviousQuery("edit mixture without a previous query");
    }
    return p_gen;
  }
  Tensor p_copy =
      tape.sigmoid(tape.add(tape.matmul(c_k, params.w_copy), params.b_copy));
  Tensor p_insert = tape.add_scaled(Tensor::constant({1, 1}, {1.0}), p_copy,
                                    -1.0);
  return tape.add(tape.row_scale(*p_prev, p_copy),
                  tape.row_scale(p_gen, p_insert));
}

DecoderStepOut decode_step(Tape& tape, const DecoderParams& params,
                           const DecoderContext& ctx, const LstmState& prev,
                           const Tensor& token_embedding) {
  ContextVector cv = compute_context(tape, params, prev.h, ctx);
  DecoderStepOut out;
  out.state = lstm_cell(tape, tape.concat_cols({token_embedding, cv.c}), prev,
                        params.lstm);
  Tensor o_k =
      tape.tanh(tape.matmul(tape.concat_cols({out.state.h, cv.c}), params.w_o));
  Tensor p_gen = output_distribution(tape, params, o_k, ctx.h_s);
  if (params.editing && !ctx.prev_sql_states.empty()) {
    if (ctx.prev_sql_ids.size() != ctx.prev_sql_states.size()) {
      throw LengthMismatch("previous-query ids do not match its states");
    }
    const int vocab =
        static_cast<int>(decoder_keywords().size()) + ctx.h_s.rows();
    Tensor p_prev =
        tape.sum_cols_by_group(cv.sql_alpha, ctx.prev_sql_ids, vocab);
    out.dist = edit_mixture(tape, params, cv.c, p_prev, p_gen);
  } else {
    out.dist = p_gen;
  }
  return out;
}

Tensor teacher_forced_nll(Tape& tape, const DecoderParams& params,
                          const DecoderContext& ctx,
                          const std::vector<int>& gold_ids) {
  if (gold_ids.empty() || gold_ids.back() != kDecoderEos) {
    throw LengthMismatch("gold sequence must be nonempty and end with EOS");
  }
  const int vocab =
      static_cast<int>(decoder_keywords().size()) + ctx.h_s.rows();
  for (int id : gold_ids) {
    if (id < 0 || id >= vocab) {
      throw ShapeMismatch("gold id outside the decoder vocabulary");
    }
  }
  LstmState state = lstm_zero_state(params.hidden);
  Tensor emb = go_embedding(tape, params);
  std::vector<Tensor> losses;
  for (int target : gold_ids) {
    DecoderStepOut step = decode_step(tape, params, ctx, state, emb);
    Tensor p_t = tape.slice_cols(step.dist, target, target + 1);
    losses.push_back(tape.scale(tape.log(p_t), -1.0));
    state = step.state;
    if (target != kDecoderEos) {
      emb = decoder_token_embedding(tape, params, ctx.h_s, target);
    }
  }
  return tape.sum_scalars(losses);
}

namespace {

struct BeamItem {
  std::vector<int> ids;
  double score = 0.0;
  bool finished = false;
  LstmState state;
  Tensor emb;
};

bool beam_order(const BeamItem& a, const BeamItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;
}

/// Suspends gradient recording for the enclosing scope.
struct GradGuard {
  Tape& tape;
  bool prev;
  explicit GradGuard(Tape& t) : tape(t), prev(t.grad_enabled()) {
    tape.set_grad_enabled(false);
  }
  ~GradGuard() { tape.set_grad_enabled(prev); }
};

}  // namespace

std::vector<BeamCandidate> beam_search(Tape& tape, const DecoderParams& params,
                                       const DecoderContext& ctx,
                                       int beam_size, int max_len) {
  if (beam_size < 1 || max_len < 1) {
    throw ConfigError("beam size and maximum length must be at least 1");
  }
  GradGuard guard(tape);
  const int vocab =
      static_cast<int>(decoder_keywords().size()) + ctx.h_s.rows();

  std::vector<BeamItem> pool(1);
  pool[0].state = lstm_zero_state(params.hidden);
  pool[0].emb = go_embedding(tape, params);

  for (int step = 0; step < max_len; ++step) {
    bool any_open = false;
    for (const BeamItem& item : pool) {
      if (!item.finished) any_open = true;
    }
    if (!any_open) break;

    std::vector<BeamItem> next;
    for (BeamItem& item : pool) {
      if (item.finished) {
        next.push_back(std::move(item));
        continue;
      }
      DecoderStepOut out = decode_step(tape, params, ctx, item.state,
                                       item.emb);
      for (int v = 0; v < vocab; ++v) {
        BeamItem cand;
        cand.ids = item.ids;
        cand.ids.push_back(v);
        cand.score = item.score + std::log(out.dist.value_at(v));
        if (v == kDecoderEos) {
          cand.finished = true;
        } else {
          cand.state = out.state;
          cand.emb = decoder_token_embedding(tape, params, ctx.h_s, v);
        }
        next.push_back(std::move(cand));
      }
    }
    std::sort(next.begin(), next.end(), beam_order);
    if (static_cast<int>(next.size()) > beam_size) next.resize(beam_size);
    pool = std::move(next);
  }

  std::vector<BeamCandidate> out;
  out.reserve(pool.size());
  for (const BeamItem& item : pool) {
    out.push_back({item.ids, item.score, item.finished});
  }
  return out;
}

}  // namespace ctxparse
