#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "ctxparse/encoder.hpp"
#include "ctxparse/errors.hpp"

using namespace ctxparse;

namespace {

std::vector<SchemaHeader> school_headers() {
  return format_headers({"teacher"}, {{0, "name"}, {0, "age"}});
}

EncoderParams zero_encoder(ParamStore& store, int embed_dim, int hidden) {
  EncoderParams p;
  p.embed_dim = embed_dim;
  p.hidden = hidden;
  int half = hidden / 2;
  auto zero_lstm = [&](const std::string& prefix, int input, int h) {
    LstmParams lp;
    lp.w_x = store.create_zeros(prefix + ".w_x", {input, 4 * h});
    lp.w_h = store.create_zeros(prefix + ".w_h", {h, 4 * h});
    lp.b = store.create_zeros(prefix + ".b", {1, 4 * h});
    lp.hidden = h;
    return lp;
  };
  p.utterance.fwd = zero_lstm("u.f", embed_dim, half);
  p.utterance.bwd = zero_lstm("u.b", embed_dim, half);
  p.interaction = zero_lstm("i", 2 * hidden, hidden);
  p.enrich = zero_lstm("e", embed_dim + hidden, hidden);
  p.schema.fwd = zero_lstm("s.f", embed_dim, half);
  p.schema.bwd = zero_lstm("s.b", embed_dim, half);
  return p;
}

std::vector<Tensor> constant_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<Tensor> out;
  for (const auto& r : rows) {
    out.push_back(Tensor::constant({1, static_cast<int>(r.size())}, r));
  }
  return out;
}

/// Plain-loop LSTM step, gate order [input, forget, cell, output].
void reference_lstm_step(const LstmParams& p, const std::vector<double>& x,
                         std::vector<double>& h, std::vector<double>& c) {
  int hidden = p.hidden;
  int input = static_cast<int>(x.size());
  std::vector<double> gates(4 * hidden, 0.0);
  for (int j = 0; j < 4 * hidden; ++j) {
    double acc = p.b.values()[j];
    for (int i = 0; i < input; ++i) {
      acc += x[i] * p.w_x.values()[static_cast<std::size_t>(i) * 4 * hidden + j];
    }
    for (int i = 0; i < hidden; ++i) {
      acc += h[i] * p.w_h.values()[static_cast<std::size_t>(i) * 4 * hidden + j];
    }
    gates[j] = acc;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int j = 0; j < hidden; ++j) {
    double ig = sig(gates[j]);
    double fg = sig(gates[hidden + j]);
    double gg = std::tanh(gates[2 * hidden + j]);
    double og = sig(gates[3 * hidden + j]);
    c[j] = fg * c[j] + ig * gg;
    h[j] = og * std::tanh(c[j]);
  }
}

}  // namespace

TEST_CASE("layout arithmetic for one turn and two single-token headers") {
  std::vector<SchemaHeader> all = school_headers();
  ConcatLayout layout = concat_layout({{"show", "names"}}, {all[1], all[2]});
  CHECK(layout.length == 8);
  CHECK(layout.cls_position == 0);
  REQUIRE(layout.token_positions.size() == 1);
  CHECK(layout.token_positions[0] == std::vector<int>{1, 2});
  CHECK(layout.utterance_sep_position == 3);
  REQUIRE(layout.header_token_positions.size() == 2);
  CHECK(layout.header_token_positions[0] == std::vector<int>{4});
  CHECK(layout.header_sep_positions[0] == 5);
  CHECK(layout.header_token_positions[1] == std::vector<int>{6});
  CHECK(layout.header_sep_positions[1] == 7);
}

TEST_CASE("turns run back to back with a single utterance separator") {
  std::vector<SchemaHeader> headers = {school_headers()[0]};  // [teacher.*]
  ConcatLayout layout =
      concat_layout({{"a", "b"}, {"c", "d", "e"}}, headers);
  // 1 cls + 5 tokens + 1 sep + 1 header token + 1 sep.
  CHECK(layout.length == 9);
  CHECK(layout.token_positions[0] == std::vector<int>{1, 2});
  CHECK(layout.token_positions[1] == std::vector<int>{3, 4, 5});
  CHECK(layout.utterance_sep_position == 6);
  CHECK(layout.header_token_positions[0] == std::vector<int>{7});
  CHECK(layout.header_sep_positions[0] == 8);
}

TEST_CASE("layout rejects empty inputs") {
  CHECK_THROWS_AS(concat_layout({}, school_headers()), EmptyInput);
  CHECK_THROWS_AS(concat_layout({{"a"}, {}}, school_headers()), EmptyInput);
  SchemaHeader bad;
  bad.text = "[x.y]";
  CHECK_THROWS_AS(concat_layout({{"a"}}, {bad}), EmptyHeader);
}

TEST_CASE("lookup embedding shares the UNK row for unknown tokens") {
  Vocab vocab;
  vocab.add("show");
  ParamStore store;
  Rng rng(9);
  EmbeddingProvider provider = make_lookup_provider(store, vocab, 4, rng);
  Tape tape;
  EmbeddedInput in = embed_concatenated_input(
      tape, {{"qqq", "zzz", "show"}}, school_headers(), provider);
  int p0 = in.layout.token_positions[0][0];
  int p1 = in.layout.token_positions[0][1];
  int p2 = in.layout.token_positions[0][2];
  for (int d = 0; d < 4; ++d) {
    double unk = provider.table.values()[Vocab::kUnk * 4 + d];
    CHECK(in.vectors[p0].values()[d] == unk);
    CHECK(in.vectors[p1].values()[d] == unk);
    CHECK(in.vectors[p2].values()[d] != doctest::Approx(unk).epsilon(1e-12));
  }
  // Marker positions resolve to the CLS and SEP rows.
  for (int d = 0; d < 4; ++d) {
    CHECK(in.vectors[in.layout.cls_position].values()[d] ==
          provider.table.values()[Vocab::kCls * 4 + d]);
    CHECK(in.vectors[in.layout.utterance_sep_position].values()[d] ==
          provider.table.values()[Vocab::kSep * 4 + d]);
  }
}

TEST_CASE("embedding table receives gradients through the lookup") {
  Vocab vocab;
  vocab.add("show");
  ParamStore store;
  Rng rng(13);
  EmbeddingProvider provider = make_lookup_provider(store, vocab, 3, rng);
  auto f = [&](Tape& tape) {
    EmbeddedInput in =
        embed_concatenated_input(tape, {{"show"}}, school_headers(), provider);
    std::vector<Tensor> sums;
    for (const Tensor& v : in.vectors) {
      sums.push_back(tape.slice_cols(v, 0, 1));
    }
    return tape.sum_scalars(sums);
  };
  CHECK(grad_check(f, {provider.table}, 1e-5) < 1e-7);
}

TEST_CASE("precomputed embeddings round-trip and validate") {
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "ctxparse_emb_test.bin").string();

  std::vector<SchemaHeader> headers = {school_headers()[1]};  // [teacher.name]
  ConcatLayout layout = concat_layout({{"hi"}}, headers);
  REQUIRE(layout.length == 5);

  PrecomputedEmbeddings records;
  PrecomputedRecord rec;
  rec.length = 5;
  rec.dimension = 2;
  for (int p = 0; p < 5; ++p) {
    rec.values.push_back(10.0 * p);
    rec.values.push_back(10.0 * p + 1);
  }
  records["i0:0"] = rec;
  PrecomputedRecord bad = rec;
  bad.length = 4;
  bad.values.resize(8);
  records["i1:0"] = bad;
  save_precomputed_embeddings(path, records);

  EmbeddingProvider provider = make_precomputed_provider(path, 2);
  REQUIRE(provider.records.size() == 2);
  CHECK(provider.records.at("i0:0").values == rec.values);

  Tape tape;
  EmbeddedInput in =
      embed_concatenated_input(tape, {{"hi"}}, headers, provider, "i0:0");
  CHECK(in.vectors[3].values() == std::vector<double>{30.0, 31.0});

  CHECK_THROWS_AS(
      embed_concatenated_input(tape, {{"hi"}}, headers, provider, "i1:0"),
      DimensionMismatch);
  CHECK_THROWS_AS(
      embed_concatenated_input(tape, {{"hi"}}, headers, provider, "nope"),
      UnknownInteraction);
  fs::remove(path);
}

TEST_CASE("zero parameters give zero utterance and interaction states") {
  ParamStore store;
  EncoderParams params = zero_encoder(store, 3, 4);
  Tape tape;
  std::vector<Tensor> xs = constant_rows({{1, 2, 3}, {4, 5, 6}});
  Tensor h_prev = Tensor::zeros({1, 4}, false);
  UtteranceEncoding enc = encode_utterance(tape, params, xs, h_prev);
  REQUIRE(enc.token_states.size() == 2);
  CHECK(enc.utterance_vector.cols() == 8);
  for (double v : enc.utterance_vector.values()) CHECK(v == 0.0);
  for (const Tensor& t : enc.token_states) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
  LstmState st =
      update_interaction_state(tape, params, enc.utterance_vector,
                               lstm_zero_state(4));
  for (double v : st.h.values()) CHECK(v == 0.0);
}

TEST_CASE("utterance vector width is twice the hidden size") {
  ParamStore store;
  Rng rng(4);
  EncoderParams params = EncoderParams::create(store, 5, 6, rng);
  Tape tape;
  std::vector<Tensor> xs = constant_rows({{1, 0, 0, 0, 0}});
  UtteranceEncoding enc =
      encode_utterance(tape, params, xs, Tensor::zeros({1, 6}, false));
  CHECK(enc.utterance_vector.cols() == 12);
  CHECK(enc.token_states[0].cols() == 6);
  CHECK_THROWS_AS(
      encode_utterance(tape, params, xs, Tensor::zeros({1, 5}, false)),
      ShapeMismatch);
  CHECK_THROWS_AS(encode_utterance(tape, params, {},
                                   Tensor::zeros({1, 6}, false)),
                  EmptyInput);
}

TEST_CASE("interaction state follows the LSTM recurrence, not averaging") {
  ParamStore store;
  Rng rng(17);
  EncoderParams params = EncoderParams::create(store, 3, 4, rng);

  std::vector<double> u(8);
  for (int i = 0; i < 8; ++i) u[i] = 0.1 * (i + 1);
  Tensor uv = Tensor::constant({1, 8}, u);

  Tape tape;
  LstmState s0 = lstm_zero_state(4);
  LstmState s1 = update_interaction_state(tape, params, uv, s0);
  LstmState s2 = update_interaction_state(tape, params, uv, s1);

  std::vector<double> rh(4, 0.0), rc(4, 0.0);
  reference_lstm_step(params.interaction, u, rh, rc);
  for (int j = 0; j < 4; ++j) {
    CHECK(s1.h.values()[j] == doctest::Approx(rh[j]).epsilon(1e-12));
  }
  reference_lstm_step(params.interaction, u, rh, rc);
  for (int j = 0; j < 4; ++j) {
    CHECK(s2.h.values()[j] == doctest::Approx(rh[j]).epsilon(1e-12));
  }

  // Identical inputs, different states across turns.
  bool differs = false;
  for (int j = 0; j < 4; ++j) {
    if (std::abs(s1.h.values()[j] - s2.h.values()[j]) > 1e-9) differs = true;
  }
  CHECK(differs);
  CHECK(s1.h.cols() == s2.h.cols());
  CHECK_THROWS_AS(
      update_interaction_state(tape, params, Tensor::zeros({1, 7}, false), s0),
      ShapeMismatch);
}

TEST_CASE("schema encoding is per header and order sensitive") {
  ParamStore store;
  Rng rng(23);
  EncoderParams params = EncoderParams::create(store, 3, 4, rng);
  Tape tape;
  std::vector<Tensor> a = constant_rows({{1, 0, 0}, {0, 1, 0}});
  std::vector<Tensor> b = constant_rows({{0, 1, 0}, {1, 0, 0}});
  std::vector<Tensor> single = constant_rows({{0, 0, 1}});

  std::vector<Tensor> states = encode_schema(tape, params, {a, b, single});
  REQUIRE(states.size() == 3);
  for (const Tensor& s : states) CHECK(s.cols() == 4);

  bool differs = false;
  for (int j = 0; j < 4; ++j) {
    if (std::abs(states[0].values()[j] - states[1].values()[j]) > 1e-9) {
      differs = true;
    }
  }
  CHECK(differs);
  CHECK_THROWS_AS(encode_schema(tape, params, {{}}), EmptyHeader);
}

TEST_CASE("two-turn pass gives every parameter a gradient") {
  Vocab vocab;
  vocab.add("show");
  vocab.add("names");
  vocab.add("ages");
  ParamStore store;
  Rng rng(31);
  EmbeddingProvider provider = make_lookup_provider(store, vocab, 2, rng);
  EncoderParams params = EncoderParams::create(store, 2, 2, rng);
  // A two-token header keeps both schema directions on a real sequence.
  std::vector<SchemaHeader> headers =
      format_headers({"person"}, {{0, "first_name"}});
  std::vector<std::vector<std::string>> turns = {{"show", "names"}, {"ages"}};

  Tape tape;
  EmbeddedInput in = embed_concatenated_input(tape, turns, headers, provider);
  std::vector<std::vector<Tensor>> header_vecs;
  for (const auto& positions : in.layout.header_token_positions) {
    std::vector<Tensor> vecs;
    for (int p : positions) vecs.push_back(in.vectors[p]);
    header_vecs.push_back(std::move(vecs));
  }

  // Run the recurrence across both turns so the interaction LSTM's
  // recurrent weight sees a nonzero state.
  LstmState st = lstm_zero_state(2);
  std::vector<Tensor> pieces;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    std::vector<Tensor> token_vecs;
    for (int p : in.layout.token_positions[t]) {
      token_vecs.push_back(in.vectors[p]);
    }
    UtteranceEncoding enc = encode_utterance(tape, params, token_vecs, st.h);
    st = update_interaction_state(tape, params, enc.utterance_vector, st);
    for (const Tensor& tok : enc.token_states) {
      pieces.push_back(tape.slice_cols(tok, 0, 1));
    }
  }
  pieces.push_back(tape.slice_cols(st.h, 1, 2));
  std::vector<Tensor> schema_states = encode_schema(tape, params, header_vecs);
  for (const Tensor& s : schema_states) {
    // Both columns: forward and backward halves of the final state.
    pieces.push_back(tape.slice_cols(s, 0, 1));
    pieces.push_back(tape.slice_cols(s, 1, 2));
  }
  Tensor loss = tape.sum_scalars(pieces);
  tape.backward(loss);

  for (const auto& [name, tensor] : store.all()) {
    double norm = 0.0;
    for (double g : tensor.grad()) norm += std::abs(g);
    INFO("parameter ", name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("encoder gradients match finite differences on a micro model") {
  Vocab vocab;
  vocab.add("show");
  vocab.add("names");
  ParamStore store;
  Rng rng(37);
  EmbeddingProvider provider = make_lookup_provider(store, vocab, 2, rng);
  EncoderParams params = EncoderParams::create(store, 2, 2, rng);
  std::vector<SchemaHeader> headers = {school_headers()[1]};

  auto f = [&](Tape& tape) {
    EmbeddedInput in = embed_concatenated_input(
        tape, {{"show", "names"}}, headers, provider);
    std::vector<Tensor> token_vecs;
    for (int p : in.layout.token_positions[0]) {
      token_vecs.push_back(in.vectors[p]);
    }
    std::vector<Tensor> hdr;
    for (int p : in.layout.header_token_positions[0]) {
      hdr.push_back(in.vectors[p]);
    }
    UtteranceEncoding enc = encode_utterance(tape, params, token_vecs,
                                             Tensor::zeros({1, 2}, false));
    LstmState st = update_interaction_state(tape, params, enc.utterance_vector,
                                            lstm_zero_state(2));
    std::vector<Tensor> schema_states = encode_schema(tape, params, {hdr});
    std::vector<Tensor> pieces;
    for (const Tensor& t : enc.token_states) {
      pieces.push_back(tape.slice_cols(t, 0, 1));
    }
    pieces.push_back(tape.slice_cols(st.h, 0, 1));
    pieces.push_back(tape.slice_cols(schema_states[0], 1, 2));
    return tape.sum_scalars(pieces);
  };
  CHECK(grad_check(f, store.tensors(), 1e-5) < 1e-6);
}

TEST_CASE("encoder outputs are deterministic for a fixed seed") {
  auto run = [](std::uint64_t seed) {
    Vocab vocab;
    vocab.add("show");
    ParamStore store;
    Rng rng(seed);
    EmbeddingProvider provider = make_lookup_provider(store, vocab, 3, rng);
    EncoderParams params = EncoderParams::create(store, 3, 4, rng);
    Tape tape;
    EmbeddedInput in = embed_concatenated_input(tape, {{"show", "x"}},
                                                school_headers(), provider);
    std::vector<Tensor> token_vecs;
    for (int p : in.layout.token_positions[0]) {
      token_vecs.push_back(in.vectors[p]);
    }
    UtteranceEncoding enc = encode_utterance(tape, params, token_vecs,
                                             Tensor::zeros({1, 4}, false));
    return enc.token_states.back().values();
  };
  CHECK(run(99) == run(99));
  CHECK(run(99) != run(100));
}

TEST_CASE("odd hidden size is rejected") {
  ParamStore store;
  Rng rng(1);
  CHECK_THROWS_AS(EncoderParams::create(store, 4, 5, rng), ConfigError);
  CHECK_THROWS_AS(EncoderParams::create(store, 4, 0, rng), ConfigError);
}
