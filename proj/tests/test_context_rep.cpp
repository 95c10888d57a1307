#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctxparse/context_rep.hpp"
#include "ctxparse/errors.hpp"

using namespace ctxparse;

namespace {

Tensor matrix(int rows, int cols, const std::vector<double>& values) {
  return Tensor::constant({rows, cols}, values);
}

Tensor ones_row(int n) {
  return Tensor::constant({1, n}, std::vector<double>(n, 1.0));
}

std::vector<double> flat(const Tensor& t) { return t.values(); }

/// Plain-loop bilinear attention with per-key decay, mirroring the decayed
/// attention contract one scalar at a time.
std::vector<double> reference_dattn(const std::vector<double>& q, int nq,
                                    const std::vector<double>& k, int nk,
                                    int d, const std::vector<double>& w,
                                    const std::vector<double>& m,
                                    std::vector<double>* alpha_out = nullptr) {
  std::vector<double> out(static_cast<std::size_t>(nq) * d, 0.0);
  std::vector<double> alpha(static_cast<std::size_t>(nq) * nk);
  for (int i = 0; i < nq; ++i) {
    std::vector<double> qw(d, 0.0);
    for (int c = 0; c < d; ++c) {
      for (int p = 0; p < d; ++p) qw[c] += q[i * d + p] * w[p * d + c];
    }
    std::vector<double> scores(nk);
    for (int j = 0; j < nk; ++j) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += qw[c] * k[j * d + c];
      scores[j] = s * m[j];
    }
    double mx = scores[0];
    for (int j = 1; j < nk; ++j) mx = std::max(mx, scores[j]);
    double sum = 0.0;
    for (int j = 0; j < nk; ++j) {
      alpha[i * nk + j] = std::exp(scores[j] - mx);
      sum += alpha[i * nk + j];
    }
    for (int j = 0; j < nk; ++j) alpha[i * nk + j] /= sum;
    for (int j = 0; j < nk; ++j) {
      for (int c = 0; c < d; ++c) out[i * d + c] += alpha[i * nk + j] * k[j * d + c];
    }
  }
  if (alpha_out) *alpha_out = alpha;
  return out;
}

struct RefDcreParams {
  int heads = 1;
  int d_z = 0;
  std::vector<double> w_q, w_k, w_v;
  std::vector<double> g_key, g_value;
  std::vector<double> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  std::vector<double> ln_gain, ln_bias;
};

RefDcreParams copy_params(const DcreLayerParams& p) {
  RefDcreParams r;
  r.heads = p.heads;
  r.d_z = p.d_z;
  r.w_q = flat(p.w_q);
  r.w_k = flat(p.w_k);
  r.w_v = flat(p.w_v);
  r.g_key = flat(p.g_key);
  r.g_value = flat(p.g_value);
  r.ffn_w1 = flat(p.ffn_w1);
  r.ffn_b1 = flat(p.ffn_b1);
  r.ffn_w2 = flat(p.ffn_w2);
  r.ffn_b2 = flat(p.ffn_b2);
  r.ln_gain = flat(p.ln_gain);
  r.ln_bias = flat(p.ln_bias);
  return r;
}

/// Scalar reference of the relation-decayed layer: the per-pair relation
/// embedding is added inside the loop over keys rather than through any
/// gather or pooling, so a vectorization slip cannot cancel out.
std::vector<double> reference_dcre(const std::vector<double>& x, int n,
                                   const std::vector<int>& rel,
                                   const std::vector<double>& m,
                                   const RefDcreParams& p,
                                   bool use_relations) {
  const int d = p.d_z;
  const int hd = d / p.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  auto project = [&](const std::vector<double>& w) {
    std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (int pp = 0; pp < d; ++pp) s += x[i * d + pp] * w[pp * d + c];
        out[i * d + c] = s;
      }
    return out;
  };
  std::vector<double> q = project(p.w_q), k = project(p.w_k),
                      v = project(p.w_v);

  std::vector<double> z(static_cast<std::size_t>(n) * d, 0.0);
  for (int h = 0; h < p.heads; ++h) {
    int off = h * hd;
    for (int i = 0; i < n; ++i) {
      std::vector<double> scores(n);
      for (int j = 0; j < n; ++j) {
        double qk = 0.0, qg = 0.0;
        for (int c = 0; c < hd; ++c) {
          qk += q[i * d + off + c] * k[j * d + off + c];
          if (use_relations) {
            qg += q[i * d + off + c] * p.g_key[rel[i * n + j] * hd + c];
          }
        }
        scores[j] = (qk + m[i] * qg) * inv_sqrt;
      }
      double mx = scores[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, scores[j]);
      double sum = 0.0;
      std::vector<double> alpha(n);
      for (int j = 0; j < n; ++j) {
        alpha[j] = std::exp(scores[j] - mx);
        sum += alpha[j];
      }
      for (int j = 0; j < n; ++j) alpha[j] /= sum;
      for (int c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          double add = v[j * d + off + c];
          if (use_relations) {
            add += m[i] * p.g_value[rel[i * n + j] * hd + c];
          }
          acc += alpha[j] * add;
        }
        z[i * d + off + c] = acc;
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(d);
    double mean = 0.0;
    for (int c = 0; c < d; ++c) {
      row[c] = x[i * d + c] + z[i * d + c];
      mean += row[c];
    }
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      double cdiff = row[c] - mean;
      var += cdiff * cdiff;
    }
    var /= d;
    double istd = 1.0 / std::sqrt(var + 1e-6);
    std::vector<double> y(d);
    for (int c = 0; c < d; ++c) {
      y[c] = (row[c] - mean) * istd * p.ln_gain[c] + p.ln_bias[c];
    }
    std::vector<double> inner(4 * d, 0.0);
    for (int c2 = 0; c2 < 4 * d; ++c2) {
      double s = p.ffn_b1[c2];
      for (int c = 0; c < d; ++c) s += y[c] * p.ffn_w1[c * 4 * d + c2];
      inner[c2] = std::max(0.0, s);
    }
    for (int c = 0; c < d; ++c) {
      double s = p.ffn_b2[c];
      for (int c2 = 0; c2 < 4 * d; ++c2) s += inner[c2] * p.ffn_w2[c2 * d + c];
      out[i * d + c] = s;
    }
  }
  return out;
}

std::vector<int> self_none_relations(int n) {
  std::vector<int> rel(static_cast<std::size_t>(n) * n,
                       static_cast<int>(RelationType::NONE));
  for (int i = 0; i < n; ++i) {
    rel[static_cast<std::size_t>(i) * n + i] =
        static_cast<int>(RelationType::SELF);
  }
  return rel;
}

}  // namespace

TEST_CASE("gather_cols picks per-row entries and routes gradients") {
  Tape tape;
  Tensor src = Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  std::vector<int> index = {2, 0, 1, 1};
  Tensor out = tape.gather_cols(src, index, 2);
  CHECK(out.values() == std::vector<double>{3, 1, 5, 5});
  CHECK_THROWS_AS(tape.gather_cols(src, {0, 1, 2, 3}, 2), ShapeMismatch);
  CHECK_THROWS_AS(tape.gather_cols(src, {0, 1}, 2), ShapeMismatch);

  auto f = [&](Tape& t) {
    Tensor g = t.gather_cols(src, index, 2);
    Tensor top = t.slice_rows(g, 0, 1);
    Tensor bottom = t.slice_rows(g, 1, 2);
    return t.sum_scalars({t.slice_cols(top, 0, 1), t.slice_cols(top, 1, 2),
                          t.slice_cols(bottom, 0, 1)});
  };
  CHECK(grad_check(f, {src}, 1e-5) < 1e-8);
}

TEST_CASE("sum_cols_by_group pools per-row entries and routes gradients") {
  Tape tape;
  Tensor src = Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  std::vector<int> index = {0, 1, 0, 1, 1, 1};
  Tensor out = tape.sum_cols_by_group(src, index, 2);
  CHECK(out.values() == std::vector<double>{4, 2, 0, 15});
  CHECK_THROWS_AS(tape.sum_cols_by_group(src, {0, 1, 2, 2, 2, 2}, 2),
                  ShapeMismatch);

  auto f = [&](Tape& t) {
    Tensor g = t.sum_cols_by_group(src, index, 2);
    return t.sum_scalars({t.slice_cols(t.slice_rows(g, 0, 1), 0, 1),
                          t.slice_cols(t.slice_rows(g, 1, 2), 1, 2)});
  };
  CHECK(grad_check(f, {src}, 1e-5) < 1e-8);
}

TEST_CASE("attention over a single key returns that key for any decay") {
  Tape tape;
  DattnParams p;
  p.w_att = matrix(2, 2, {0.7, -0.2, 0.1, 0.4});
  Tensor h_q = matrix(2, 2, {1.0, 2.0, -1.0, 0.5});
  Tensor h_k = matrix(1, 2, {3.0, -4.0});
  for (double decay : {1.0, 0.3}) {
    AttnResult r = dattn(tape, h_q, h_k, matrix(1, 1, {decay}), p);
    CHECK(r.output.values() == std::vector<double>{3.0, -4.0, 3.0, -4.0});
    CHECK(r.alpha.values() == std::vector<double>{1.0, 1.0});
  }
}

TEST_CASE("all-ones decay reduces to plain bilinear attention") {
  Rng rng(41);
  ParamStore store;
  DattnParams p = DattnParams::create(store, "att", 3, rng);
  std::vector<double> qv(6), kv(12);
  for (auto& v : qv) v = rng.uniform(-1, 1);
  for (auto& v : kv) v = rng.uniform(-1, 1);
  Tensor h_q = matrix(2, 3, qv);
  Tensor h_k = matrix(4, 3, kv);
  Tape tape;
  AttnResult r = dattn(tape, h_q, h_k, ones_row(4), p);
  std::vector<double> ref =
      reference_dattn(qv, 2, kv, 4, 3, flat(p.w_att),
                      std::vector<double>(4, 1.0));
  REQUIRE(r.output.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(r.output.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) sum += r.alpha.values()[i * 4 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("two equal keys with decayed second get unequal attention") {
  Tape tape;
  DattnParams p;
  p.w_att = matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tensor h_q = matrix(1, 2, {1.0, 1.0});
  Tensor h_k = matrix(2, 2, {1.0, 1.0, 1.0, 1.0});
  AttnResult r = dattn(tape, h_q, h_k, matrix(1, 2, {1.0, 0.8}), p);
  // Score of both keys is 2; the decayed one becomes 1.6.
  double a0 = std::exp(2.0) / (std::exp(2.0) + std::exp(1.6));
  CHECK(r.alpha.values()[0] == doctest::Approx(a0).epsilon(1e-12));
  CHECK(r.alpha.values()[1] == doctest::Approx(1.0 - a0).epsilon(1e-12));
  CHECK(r.alpha.values()[0] > r.alpha.values()[1]);
}

TEST_CASE("lowering a key's decay never raises its weight on positive scores") {
  Rng rng(59);
  ParamStore store;
  DattnParams p;
  p.w_att = matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> qv = {rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5)};
    std::vector<double> kv(6);
    for (auto& v : kv) v = rng.uniform(0.1, 1.5);
    Tensor h_q = matrix(1, 2, qv);
    Tensor h_k = matrix(3, 2, kv);
    int target = static_cast<int>(rng.next_below(3));
    std::vector<double> m_hi(3, 1.0), m_lo(3, 1.0);
    m_hi[target] = rng.uniform(0.5, 1.0);
    m_lo[target] = m_hi[target] - rng.uniform(0.05, 0.4);
    Tape tape;
    AttnResult hi = dattn(tape, h_q, h_k, matrix(1, 3, m_hi), p);
    AttnResult lo = dattn(tape, h_q, h_k, matrix(1, 3, m_lo), p);
    CHECK(lo.alpha.values()[target] <= hi.alpha.values()[target] + 1e-15);
  }
}

TEST_CASE("schema self-attention uses unit decay and keeps header count") {
  Rng rng(61);
  ParamStore store;
  DcriParams p = DcriParams::create(store, "dcri", 2, rng);
  Tape tape;
  Tensor single = matrix(1, 2, {0.4, -0.9});
  AttnResult one = schema_inner(tape, single, p);
  CHECK(one.output.values() == single.values());

  Tensor many = matrix(3, 2, {1, 0, 0, 1, 1, 1});
  AttnResult r = schema_inner(tape, many, p);
  CHECK(r.output.rows() == 3);
  AttnResult direct = dattn(tape, many, many, ones_row(3), p.schema_self);
  CHECK(r.output.values() == direct.output.values());
}

TEST_CASE("co-attention shapes, uniform fallback, and mode semantics") {
  Rng rng(67);
  ParamStore store;
  DcriParams p = DcriParams::create(store, "dcri", 2, rng);
  Tensor h_u = matrix(3, 2, {0.2, 0.4, -0.5, 1.0, 0.7, -0.1});
  Tensor h_s = matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tensor m_iu = matrix(1, 3, {0.8, 0.9, 1.0});
  Tensor m_s = ones_row(2);

  Tape tape;
  CoAttentionResult ka =
      co_attention(tape, h_u, h_s, m_iu, m_s, p, CoAttentionMode::KEY_ALIGNED);
  CHECK(ka.token_side.output.rows() == 3);
  CHECK(ka.schema_side.output.rows() == 2);

  // Under key alignment the token side pairs with the header decay, which is
  // all ones, so the token side ignores the token decay entirely.
  CoAttentionResult ka2 = co_attention(tape, h_u, h_s, ones_row(3), m_s, p,
                                       CoAttentionMode::KEY_ALIGNED);
  CHECK(ka.token_side.output.values() == ka2.token_side.output.values());
  bool schema_side_differs = false;
  for (std::size_t i = 0; i < ka.schema_side.output.size(); ++i) {
    if (std::abs(ka.schema_side.output.values()[i] -
                 ka2.schema_side.output.values()[i]) > 1e-12) {
      schema_side_differs = true;
    }
  }
  CHECK(schema_side_differs);

  // With every decay at 1 the two modes coincide.
  CoAttentionResult sw1 = co_attention(tape, h_u, h_s, ones_row(3), m_s, p,
                                       CoAttentionMode::AS_PRINTED_SWAPPED);
  CHECK(sw1.token_side.output.values() == ka2.token_side.output.values());
  CHECK(sw1.schema_side.output.values() == ka2.schema_side.output.values());

  // With a nontrivial token decay they do not.
  CoAttentionResult sw = co_attention(tape, h_u, h_s, m_iu, m_s, p,
                                      CoAttentionMode::AS_PRINTED_SWAPPED);
  bool differs = false;
  for (std::size_t i = 0; i < sw.token_side.output.size(); ++i) {
    if (std::abs(sw.token_side.output.values()[i] -
                 ka.token_side.output.values()[i]) > 1e-12) {
      differs = true;
    }
  }
  CHECK(differs);
}

TEST_CASE("zero bilinear weights give uniform attention over headers") {
  ParamStore store;
  DcriParams p;
  p.schema_self.w_att = Tensor::zeros({2, 2}, false);
  p.token_over_schema.w_att = Tensor::zeros({2, 2}, false);
  p.schema_over_token.w_att = Tensor::zeros({2, 2}, false);
  Tensor h_u = matrix(1, 2, {5.0, -3.0});
  Tensor h_s = matrix(2, 2, {2.0, 0.0, 0.0, 4.0});
  Tape tape;
  CoAttentionResult r = co_attention(tape, h_u, h_s, ones_row(1), ones_row(2),
                                     p, CoAttentionMode::KEY_ALIGNED);
  CHECK(r.token_side.alpha.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.token_side.output.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.token_side.output.values()[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("single-head relation layer matches the scalar reference") {
  DcreLayerParams p;
  p.heads = 1;
  p.d_z = 2;
  p.w_q = matrix(2, 2, {0.5, -0.3, 0.2, 0.4});
  p.w_k = matrix(2, 2, {0.1, 0.6, -0.4, 0.3});
  p.w_v = matrix(2, 2, {0.9, 0.2, -0.1, 0.7});
  std::vector<double> gk(kNumRelationTypes * 2, 0.0);
  std::vector<double> gv(kNumRelationTypes * 2, 0.0);
  gk[static_cast<int>(RelationType::SELF) * 2] = 0.4;
  gk[static_cast<int>(RelationType::SELF) * 2 + 1] = -0.2;
  gk[static_cast<int>(RelationType::NONE) * 2] = 0.1;
  gv[static_cast<int>(RelationType::SELF) * 2 + 1] = 0.5;
  gv[static_cast<int>(RelationType::NONE) * 2] = -0.3;
  p.g_key = matrix(kNumRelationTypes, 2, gk);
  p.g_value = matrix(kNumRelationTypes, 2, gv);
  std::vector<double> w1(2 * 8), w2(8 * 2);
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = 0.05 * (i % 7) - 0.1;
  for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = 0.04 * (i % 5) - 0.06;
  p.ffn_w1 = matrix(2, 8, w1);
  p.ffn_b1 = matrix(1, 8, std::vector<double>(8, 0.01));
  p.ffn_w2 = matrix(8, 2, w2);
  p.ffn_b2 = matrix(1, 2, {0.02, -0.01});
  p.ln_gain = matrix(1, 2, {1.0, 1.0});
  p.ln_bias = matrix(1, 2, {0.0, 0.0});

  std::vector<double> xv = {1.0, 0.0, 0.0, 1.0};
  std::vector<int> rel = self_none_relations(2);
  std::vector<double> mv = {1.0, 0.8};

  Tape tape;
  DcreOut out = dcre_layer(tape, matrix(2, 2, xv), rel, matrix(1, 2, mv), p);
  std::vector<double> ref = reference_dcre(xv, 2, rel, mv, copy_params(p),
                                           true);
  REQUIRE(out.r_e.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(out.r_e.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 2; ++j) sum += out.alphas[0].values()[i * 2 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("multi-head relation layer matches the scalar reference") {
  Rng rng(71);
  ParamStore store;
  DcreLayerParams p = DcreLayerParams::create(store, "dcre", 4, 2, rng);
  const int n = 5;
  std::vector<double> xv(static_cast<std::size_t>(n) * 4);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  std::vector<int> rel(static_cast<std::size_t>(n) * n);
  for (auto& r : rel) r = static_cast<int>(rng.next_below(kNumRelationTypes));
  std::vector<double> mv(n);
  for (auto& v : mv) v = rng.uniform(0.8, 1.0);

  Tape tape;
  DcreOut out = dcre_layer(tape, matrix(n, 4, xv), rel, matrix(1, n, mv), p);
  std::vector<double> ref = reference_dcre(xv, n, rel, mv, copy_params(p),
                                           true);
  CHECK(out.r_e.rows() == n);
  REQUIRE(out.r_e.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(out.r_e.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("zero relations and unit decay reduce to a vanilla transformer") {
  Rng rng(73);
  ParamStore store;
  DcreLayerParams p = DcreLayerParams::create(store, "dcre", 4, 2, rng);
  p.g_key.values().assign(p.g_key.size(), 0.0);
  p.g_value.values().assign(p.g_value.size(), 0.0);
  const int n = 4;
  std::vector<double> xv(static_cast<std::size_t>(n) * 4);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  std::vector<int> rel = self_none_relations(n);
  std::vector<double> mv(n, 1.0);

  Tape tape;
  DcreOut out = dcre_layer(tape, matrix(n, 4, xv), rel, matrix(1, n, mv), p);
  // The reference ignores relations entirely here: plain multi-head
  // attention plus the residual layer-norm FFN.
  std::vector<double> ref = reference_dcre(xv, n, rel, mv, copy_params(p),
                                           false);
  REQUIRE(out.r_e.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(out.r_e.values()[i] == doctest::Approx(ref[i]).epsilon(1e-15));
  }
}

TEST_CASE("relation layer validates inputs") {
  Rng rng(79);
  ParamStore store;
  DcreLayerParams p = DcreLayerParams::create(store, "dcre", 2, 1, rng);
  Tape tape;
  Tensor x = matrix(2, 2, {1, 0, 0, 1});
  std::vector<int> rel = self_none_relations(2);
  CHECK_THROWS_AS(
      dcre_layer(tape, x, rel, matrix(1, 3, {1, 1, 1}), p), ShapeMismatch);
  CHECK_THROWS_AS(
      dcre_layer(tape, x, {0, 1, 2}, ones_row(2), p), ShapeMismatch);
  std::vector<int> bad = rel;
  bad[1] = kNumRelationTypes;
  CHECK_THROWS_AS(dcre_layer(tape, x, bad, ones_row(2), p), UnknownRelationId);
  CHECK_THROWS_AS(DcreLayerParams::create(store, "odd", 5, 2, rng),
                  ConfigError);
}

TEST_CASE("decay values receive gradients through the relation layer") {
  Rng rng(83);
  ParamStore store;
  DcreLayerParams p = DcreLayerParams::create(store, "dcre", 2, 1, rng);
  const int n = 3;
  std::vector<double> xv(static_cast<std::size_t>(n) * 2);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  Tensor x = matrix(n, 2, xv);
  std::vector<int> rel = self_none_relations(n);
  Tensor m = Tensor::leaf({1, n}, {0.9, 0.85, 1.0}, true);
  auto f = [&](Tape& tape) {
    DcreOut out = dcre_layer(tape, x, rel, m, p);
    return tape.sum_scalars({tape.slice_cols(tape.slice_rows(out.r_e, 0, 1), 0, 1),
                             tape.slice_cols(tape.slice_rows(out.r_e, 2, 3), 1, 2)});
  };
  CHECK(grad_check(f, {m, p.g_key, p.g_value, p.w_q}, 1e-5) < 1e-6);
}

TEST_CASE("swapping two identical-relation headers swaps their outputs") {
  Rng rng(89);
  ParamStore store;
  DcreLayerParams p = DcreLayerParams::create(store, "dcre", 2, 1, rng);
  // Node 0 is a token, nodes 1 and 2 are headers with identical relation
  // structure (NONE to the token, NONE to each other, SELF on the diagonal).
  const int none = static_cast<int>(RelationType::NONE);
  const int self = static_cast<int>(RelationType::SELF);
  std::vector<int> rel = {self, none, none,
                          none, self, none,
                          none, none, self};
  std::vector<double> xa = {0.3, -0.2, 1.0, 0.5, -0.4, 0.8};
  std::vector<double> xb = {0.3, -0.2, -0.4, 0.8, 1.0, 0.5};
  Tensor m = ones_row(3);
  Tape tape;
  DcreOut a = dcre_layer(tape, matrix(3, 2, xa), rel, m, p);
  DcreOut b = dcre_layer(tape, matrix(3, 2, xb), rel, m, p);
  for (int c = 0; c < 2; ++c) {
    CHECK(a.r_e.values()[0 * 2 + c] ==
          doctest::Approx(b.r_e.values()[0 * 2 + c]).epsilon(1e-12));
    CHECK(a.r_e.values()[1 * 2 + c] ==
          doctest::Approx(b.r_e.values()[2 * 2 + c]).epsilon(1e-12));
    CHECK(a.r_e.values()[2 * 2 + c] ==
          doctest::Approx(b.r_e.values()[1 * 2 + c]).epsilon(1e-12));
  }
}

TEST_CASE("fusing keeps sequence lengths and widths") {
  Rng rng(97);
  ParamStore store;
  FuseParams p = FuseParams::create(store, "fuse", 4, rng);
  Tape tape;
  auto rnd = [&](int rows, int cols) {
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return matrix(rows, cols, v);
  };
  Tensor h_u = rnd(3, 4), h_s = rnd(2, 4);
  Tensor r_iu = rnd(3, 4), r_is = rnd(2, 4), r_e = rnd(5, 4);
  FusedStates f = fuse(tape, h_u, h_s, r_iu, r_is, r_e, p);
  CHECK(f.h_u.rows() == 3);
  CHECK(f.h_u.cols() == 4);
  CHECK(f.h_s.rows() == 2);
  CHECK(f.h_s.cols() == 4);
  CHECK_THROWS_AS(fuse(tape, h_u, h_s, r_iu, r_is, rnd(4, 4), p),
                  ShapeMismatch);
  CHECK_THROWS_AS(fuse(tape, h_u, h_s, rnd(2, 4), r_is, r_e, p),
                  ShapeMismatch);
}

TEST_CASE("full stack has matching shapes and is deterministic") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    ContextRepParams params = ContextRepParams::create(store, "ctx", 4, 2, rng);
    std::vector<double> uv(3 * 4), sv(2 * 4);
    for (auto& v : uv) v = rng.uniform(-1, 1);
    for (auto& v : sv) v = rng.uniform(-1, 1);
    DecayVector decay;
    decay.m_iu = Tensor::constant({1, 3}, {0.9, 0.95, 1.0});
    decay.m_s = Tensor::constant({1, 2}, {1.0, 1.0});
    Tape tape;
    decay.m = tape.concat_cols({decay.m_iu, decay.m_s});
    ContextRepresentation rep = build_context_representation(
        tape, Tensor::constant({3, 4}, uv), Tensor::constant({2, 4}, sv),
        self_none_relations(5), decay, params, CoAttentionMode::KEY_ALIGNED);
    return rep;
  };
  ContextRepresentation rep = run(101);
  CHECK(rep.implicit.token_side.output.rows() == 3);
  CHECK(rep.implicit.schema_side.output.rows() == 2);
  CHECK(rep.explicit_rep.r_e.rows() == 5);
  CHECK(rep.fused.h_u.rows() == 3);
  CHECK(rep.fused.h_s.rows() == 2);
  ContextRepresentation again = run(101);
  CHECK(rep.fused.h_u.values() == again.fused.h_u.values());
  CHECK(rep.fused.h_s.values() == again.fused.h_s.values());
}

TEST_CASE("full stack gradients match finite differences") {
  Rng rng(103);
  ParamStore store;
  ContextRepParams params = ContextRepParams::create(store, "ctx", 2, 1, rng);
  std::vector<double> uv = {0.3, -0.5, 0.8, 0.1};
  std::vector<double> sv = {0.6, 0.2, -0.3, 0.9};
  Tensor h_u = matrix(2, 2, uv);
  Tensor h_s = matrix(2, 2, sv);
  std::vector<int> rel = self_none_relations(4);
  auto f = [&](Tape& tape) {
    DecayVector decay;
    decay.m_iu = Tensor::constant({1, 2}, {0.9, 1.0});
    decay.m_s = Tensor::constant({1, 2}, {1.0, 1.0});
    decay.m = tape.concat_cols({decay.m_iu, decay.m_s});
    ContextRepresentation rep = build_context_representation(
        tape, h_u, h_s, rel, decay, params, CoAttentionMode::KEY_ALIGNED);
    std::vector<Tensor> pieces;
    for (int i = 0; i < 2; ++i) {
      for (int c = 0; c < 2; ++c) {
        pieces.push_back(
            tape.slice_cols(tape.slice_rows(rep.fused.h_u, i, i + 1), c, c + 1));
        pieces.push_back(
            tape.slice_cols(tape.slice_rows(rep.fused.h_s, i, i + 1), c, c + 1));
      }
    }
    return tape.sum_scalars(pieces);
  };
  CHECK(grad_check(f, store.tensors(), 1e-5) < 1e-6);
}

TEST_CASE("relation tables and attention weights receive gradients") {
  Rng rng(107);
  ParamStore store;
  ContextRepParams params = ContextRepParams::create(store, "ctx", 2, 1, rng);
  std::vector<int> rel = self_none_relations(4);
  rel[1] = static_cast<int>(RelationType::EXACT_MATCH_COLUMN);
  Tape tape;
  DecayVector decay;
  decay.m_iu = Tensor::constant({1, 2}, {0.85, 1.0});
  decay.m_s = Tensor::constant({1, 2}, {1.0, 1.0});
  decay.m = tape.concat_cols({decay.m_iu, decay.m_s});
  ContextRepresentation rep = build_context_representation(
      tape, matrix(2, 2, {0.3, -0.5, 0.8, 0.1}),
      matrix(2, 2, {0.6, 0.2, -0.3, 0.9}), rel, decay, params,
      CoAttentionMode::KEY_ALIGNED);
  std::vector<Tensor> pieces;
  for (int c = 0; c < 2; ++c) {
    pieces.push_back(
        tape.slice_cols(tape.slice_rows(rep.fused.h_u, 0, 1), c, c + 1));
    pieces.push_back(
        tape.slice_cols(tape.slice_rows(rep.fused.h_s, 1, 2), c, c + 1));
  }
  tape.backward(tape.sum_scalars(pieces));
  for (const char* name :
       {"ctx.dcre.g_key", "ctx.dcre.g_value", "ctx.dcri.inner.w_att",
        "ctx.dcri.tok_sch.w_att", "ctx.dcri.sch_tok.w_att", "ctx.dcre.w_q"}) {
    double norm = 0.0;
    for (double g : store.get(name).grad()) norm += std::abs(g);
    INFO("parameter ", name);
    CHECK(norm > 0.0);
  }
}
