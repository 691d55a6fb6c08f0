#include "doctest.h"

#include "sst/autodiff.hpp"
#include "sst/slstm.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace sst;

namespace {

using Vec = std::vector<double>;
using Grid = std::vector<Vec>;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---- independent scalar-loop transcription of the state transition ----
// Plain arrays and loops only; reads parameter entries one coordinate at a
// time.

struct RefState {
  Grid h, c;   // (n+2) x d
  Grid g, cg;  // m x d
};

Vec matvec_ref(const Parameter& p, const Vec& x) {
  Vec out(p.value.rows(), 0.0);
  for (Index r = 0; r < p.value.rows(); ++r)
    for (Index c = 0; c < p.value.cols(); ++c)
      out[r] += p.value(r, c) * x[c];
  return out;
}

RefState ref_init(Index n, const SLstmParams& p, const SLstmConfig& cfg) {
  RefState s;
  Vec h0(cfg.hidden);
  for (Index j = 0; j < cfg.hidden; ++j) h0[j] = p.h0.value(j);
  s.h.assign(n + 2, h0);
  s.c.assign(n + 2, Vec(cfg.hidden, 0.0));
  s.g.assign(cfg.sentence_nodes, h0);
  s.cg.assign(cfg.sentence_nodes, Vec(cfg.hidden, 0.0));
  return s;
}

RefState ref_transition(const RefState& prev, const Grid& x,
                        const SLstmParams& p, const SLstmConfig& cfg) {
  int w = cfg.window;
  int m = cfg.sentence_nodes;
  Index d = cfg.hidden;
  Index rows = static_cast<Index>(prev.h.size());
  RefState next = prev;

  Vec gbar(d, 0.0), cgbar(d, 0.0);
  if (m >= 1) {
    for (int j = 0; j < m; ++j)
      for (Index q = 0; q < d; ++q) {
        gbar[q] += prev.g[j][q] / m;
        cgbar[q] += prev.cg[j][q] / m;
      }
  }

  for (Index i = 0; i < rows; ++i) {
    Vec xi((2 * w + 1) * d, 0.0);
    for (int o = -w; o <= w; ++o) {
      Index src = i + o;
      if (src < 0 || src >= rows) continue;
      for (Index q = 0; q < d; ++q) xi[(o + w) * d + q] = prev.h[src][q];
    }
    int ng = p.n_gates();
    Grid act(ng);
    for (int g = 0; g < ng; ++g) {
      Vec pre = matvec_ref(p.w[g], xi);
      Vec ux = matvec_ref(p.u[g], x[i]);
      Vec vg(d, 0.0);
      if (m >= 1) vg = matvec_ref(p.v[g], gbar);
      act[g].resize(d);
      for (Index q = 0; q < d; ++q) {
        double z = pre[q] + ux[q] + vg[q] + p.b[g].value(q);
        act[g][q] = (g == p.idx_u()) ? std::tanh(z) : sig(z);
      }
    }
    int nn = p.n_norm();
    for (Index q = 0; q < d; ++q) {
      double denom = 0.0;
      for (int g = 0; g < nn; ++g) denom += std::exp(act[g][q]);
      double cnew = 0.0;
      for (int g = 0; g < nn; ++g) {
        double gate = std::exp(act[g][q]) / denom;
        if (g == p.idx_i()) {
          cnew += gate * act[p.idx_u()][q];
        } else if (g == p.idx_f()) {
          cnew += gate * prev.c[i][q];
        } else if (m >= 1 && g == p.idx_s()) {
          cnew += gate * cgbar[q];
        } else {
          for (int k = 0; k < w; ++k) {
            if (g == p.idx_l(k) && i - (k + 1) >= 0)
              cnew += gate * prev.c[i - (k + 1)][q];
            if (g == p.idx_r(k) && i + (k + 1) < rows)
              cnew += gate * prev.c[i + (k + 1)][q];
          }
        }
      }
      next.c[i][q] = cnew;
      next.h[i][q] = act[p.idx_o()][q] * std::tanh(cnew);
    }
  }

  for (int j = 0; j < m; ++j) {
    Vec hbar(d, 0.0);
    for (Index i = 0; i < rows; ++i)
      for (Index q = 0; q < d; ++q) hbar[q] += prev.h[i][q] / rows;
    if (m >= 2) {
      for (int jj = 0; jj < m; ++jj) {
        if (jj == j) continue;
        for (Index q = 0; q < d; ++q) hbar[q] += prev.g[jj][q] / (m - 1);
      }
    }
    Vec wg_g = matvec_ref(p.sent[0], prev.g[j]);
    Vec ug_h = matvec_ref(p.sent[1], hbar);
    Vec wf_g = matvec_ref(p.sent[3], prev.g[j]);
    Vec wo_g = matvec_ref(p.sent[6], prev.g[j]);
    Vec uo_h = matvec_ref(p.sent[7], hbar);
    Grid fw(rows, Vec(d));
    for (Index i = 0; i < rows; ++i) {
      Vec uf_h = matvec_ref(p.sent[4], prev.h[i]);
      for (Index q = 0; q < d; ++q)
        fw[i][q] = sig(wf_g[q] + uf_h[q] + p.sent[5].value(q));
    }
    for (Index q = 0; q < d; ++q) {
      double fg = sig(wg_g[q] + ug_h[q] + p.sent[2].value(q));
      double denom = std::exp(fg);
      for (Index i = 0; i < rows; ++i) denom += std::exp(fw[i][q]);
      double cnew = std::exp(fg) / denom * prev.cg[j][q];
      for (Index i = 0; i < rows; ++i)
        cnew += std::exp(fw[i][q]) / denom * prev.c[i][q];
      double o = sig(wo_g[q] + uo_h[q] + p.sent[8].value(q));
      next.cg[j][q] = cnew;
      next.g[j][q] = o * std::tanh(cnew);
    }
  }
  return next;
}

Tensor rand_emb(Index rows, Index cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return uniform(rows, cols, 2, -1.0, 1.0, rng);
}

void zero_all(SLstmParams& p) {
  for (Parameter* q : p.parameters()) q->value.set_zero();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  return (a.mat() - b.mat()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE_BEGIN("slstm");

TEST_CASE("defaults follow the chosen configuration") {
  SLstmConfig cfg;
  CHECK(cfg.hidden == 300);
  CHECK(cfg.steps == 9);
  CHECK(cfg.window == 1);
  CHECK(cfg.sentence_nodes == 1);
}

TEST_CASE("init_state rows all equal h0, cells zero") {
  SLstmConfig cfg;
  cfg.hidden = 4;
  cfg.input_size = 3;
  SLstmParams p = SLstmParams::create(cfg, 5);

  SLstmState s0 = init_state(0, p, cfg);
  CHECK(s0.word_h.rows() == 2);
  CHECK(s0.t == 0);

  SLstmState s3 = init_state(3, p, cfg);
  CHECK(s3.word_h.rows() == 5);
  CHECK(s3.sent_g.rows() == 1);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 4; ++j) {
      CHECK(s3.word_h(i, j) == p.h0.value(j));
      CHECK(s3.word_c(i, j) == 0.0);
    }
  for (Index j = 0; j < 4; ++j) CHECK(s3.sent_g(0, j) == p.h0.value(j));

  zero_all(p);
  SLstmState sz = init_state(2, p, cfg);
  CHECK(sz.word_h.mat().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("word_step zero parameters is a fixpoint at zero") {
  SLstmConfig cfg;
  cfg.hidden = 3;
  cfg.input_size = 2;
  SLstmParams p = SLstmParams::create(cfg, 1);
  zero_all(p);
  SLstmState s = init_state(2, p, cfg);
  Tensor x = Tensor::vector(2);
  x(0) = 0.7;
  x(1) = -0.3;
  auto [h, c] = word_step(1, s, x, p, cfg);
  CHECK(h.mat().cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.mat().cwiseAbs().maxCoeff() == 0.0);
  // All-zero pre-activations: the five-way softmax is uniform.
  GateBundle gates = word_gates(1, s, x, p, cfg);
  for (Index j = 0; j < 3; ++j) {
    CHECK(gates.i(j) == doctest::Approx(0.2));
    CHECK(gates.f(j) == doctest::Approx(0.2));
    CHECK(gates.s(j) == doctest::Approx(0.2));
    CHECK(gates.l[0](j) == doctest::Approx(0.2));
    CHECK(gates.r[0](j) == doctest::Approx(0.2));
  }
  CHECK_THROWS_AS(word_step(7, s, x, p, cfg), std::invalid_argument);
}

TEST_CASE("word and sentence steps match the scalar-loop transcription") {
  for (auto [w, m, seed] :
       {std::tuple<int, int, int>{1, 1, 11},
        {2, 2, 12},
        {1, 0, 13},
        {2, 0, 14},
        {1, 3, 15}}) {
    SLstmConfig cfg;
    cfg.hidden = 3;
    cfg.window = w;
    cfg.sentence_nodes = m;
    cfg.input_size = 2;
    cfg.steps = 3;
    SLstmParams p = SLstmParams::create(cfg, seed);
    Index n = 4;
    Tensor emb = rand_emb(n + 2, cfg.input_size, seed + 100);

    Grid x(n + 2, Vec(cfg.input_size));
    for (Index i = 0; i < n + 2; ++i)
      for (Index j = 0; j < cfg.input_size; ++j) x[i][j] = emb(i, j);
    RefState ref = ref_init(n, p, cfg);
    for (int t = 0; t < cfg.steps; ++t) ref = ref_transition(ref, x, p, cfg);

    SLstmState s = init_state(n, p, cfg);
    for (int t = 0; t < cfg.steps; ++t) s = transition(s, emb, p, cfg);

    for (Index i = 0; i < n + 2; ++i)
      for (Index j = 0; j < cfg.hidden; ++j) {
        CHECK(s.word_h(i, j) == doctest::Approx(ref.h[i][j]).epsilon(1e-12));
        CHECK(s.word_c(i, j) == doctest::Approx(ref.c[i][j]).epsilon(1e-12));
      }
    for (int jn = 0; jn < m; ++jn)
      for (Index j = 0; j < cfg.hidden; ++j)
        CHECK(s.sent_g(jn, j) == doctest::Approx(ref.g[jn][j]).epsilon(1e-12));
  }
}

TEST_CASE("sentence_step uniform gates under zero parameters") {
  SLstmConfig cfg;
  cfg.hidden = 1;
  cfg.input_size = 1;
  SLstmParams p = SLstmParams::create(cfg, 3);
  zero_all(p);

  // n = 0, d = 1, nonzero cells: c_g' = (c_g + c_0 + c_1) / 3.
  SLstmState s = init_state(0, p, cfg);
  s.word_c(0, 0) = 0.3;
  s.word_c(1, 0) = -0.9;
  s.sent_c(0, 0) = 0.6;
  auto [g, cg] = sentence_step(s, p, cfg, 0);
  CHECK(cg(0) == doctest::Approx((0.6 + 0.3 - 0.9) / 3.0));
  CHECK(g(0) == doctest::Approx(0.5 * std::tanh(cg(0))));

  // All cells zero: uniform forget family, zero cell and hidden.
  SLstmState z = init_state(3, p, cfg);
  SentenceGates gates = sentence_gates(z, p, cfg, 0);
  for (Index i = 0; i < 5; ++i)
    CHECK(gates.f_words(i, 0) == doctest::Approx(1.0 / 6.0));
  CHECK(gates.f_g(0) == doctest::Approx(1.0 / 6.0));
  auto [gz, cgz] = sentence_step(z, p, cfg, 0);
  CHECK(gz(0) == 0.0);
  CHECK(cgz(0) == 0.0);

  CHECK_THROWS_AS(sentence_step(z, p, cfg, 2), std::invalid_argument);
  SLstmConfig none = cfg;
  none.sentence_nodes = 0;
  SLstmParams pn = SLstmParams::create(none, 3);
  SLstmState sn = init_state(2, pn, none);
  CHECK_THROWS_AS(sentence_step(sn, pn, none, 0), std::runtime_error);
}

TEST_CASE("transition is pure and length-checked") {
  SLstmConfig cfg;
  cfg.hidden = 4;
  cfg.input_size = 3;
  SLstmParams p = SLstmParams::create(cfg, 21);
  Tensor emb = rand_emb(6, 3, 22);
  SLstmState s = init_state(4, p, cfg);
  SLstmState a = transition(s, emb, p, cfg);
  SLstmState b = transition(s, emb, p, cfg);
  CHECK(max_abs_diff(a.word_h, b.word_h) == 0.0);
  CHECK(max_abs_diff(a.sent_g, b.sent_g) == 0.0);
  Tensor bad = rand_emb(5, 3, 23);
  CHECK_THROWS_AS(transition(s, bad, p, cfg), std::invalid_argument);
}

TEST_CASE("parallel word updates are bit-identical to sequential") {
  SLstmConfig cfg;
  cfg.hidden = 8;
  cfg.input_size = 5;
  cfg.window = 2;
  SLstmParams p = SLstmParams::create(cfg, 31);
  Tensor emb = rand_emb(12, 5, 32);
  SLstmState s = init_state(10, p, cfg);
  for (int t = 0; t < 2; ++t) {
    SLstmState seq = transition(s, emb, p, cfg, 1);
    SLstmState par = transition(s, emb, p, cfg, 4);
    CHECK(max_abs_diff(seq.word_h, par.word_h) == 0.0);
    CHECK(max_abs_diff(seq.word_c, par.word_c) == 0.0);
    CHECK(max_abs_diff(seq.sent_g, par.sent_g) == 0.0);
    s = seq;
  }
}

TEST_CASE("receptive field stays local without a sentence node") {
  // Perturbing embedding j leaves h_i^t bitwise unchanged for |i-j| > w*t.
  // Through the hidden chain the influence radius at step t is w*(t-1), so
  // positions with |i-j| <= w*(t-1) (and i == j) must change.
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    SLstmConfig cfg;
    cfg.hidden = 3;
    cfg.input_size = 2;
    cfg.sentence_nodes = 0;
    cfg.window = (trial % 2) + 1;
    SLstmParams p = SLstmParams::create(cfg, 400 + trial);
    Index n = 10;
    Tensor emb = rand_emb(n + 2, 2, 500 + trial);
    std::uniform_int_distribution<Index> pos(0, n + 1);
    Index j = pos(rng);
    Tensor emb2 = emb;
    emb2(j, 0) += 0.25;

    SLstmState a = init_state(n, p, cfg);
    SLstmState b = a;
    for (int t = 1; t <= 4; ++t) {
      a = transition(a, emb, p, cfg);
      b = transition(b, emb2, p, cfg);
      for (Index i = 0; i < n + 2; ++i) {
        bool same = true;
        for (Index q = 0; q < cfg.hidden; ++q) {
          if (a.word_h(i, q) != b.word_h(i, q)) same = false;
        }
        long dist = std::labs(i - j);
        if (dist > static_cast<long>(cfg.window) * t) {
          CHECK(same);
        } else if (dist <= static_cast<long>(cfg.window) * (t - 1)) {
          CHECK_FALSE(same);
        }
      }
    }
  }
}

TEST_CASE("sentence node opens a global channel by step three") {
  std::mt19937_64 rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    SLstmConfig cfg;
    cfg.hidden = 3;
    cfg.input_size = 2;
    cfg.sentence_nodes = 1;
    SLstmParams p = SLstmParams::create(cfg, 600 + trial);
    Index n = 9;
    Tensor emb = rand_emb(n + 2, 2, 700 + trial);
    std::uniform_int_distribution<Index> pos(0, n + 1);
    Index j = pos(rng);
    Tensor emb2 = emb;
    emb2(j, 1) += 0.5;

    SLstmState a = init_state(n, p, cfg);
    SLstmState b = a;
    for (int t = 0; t < 3; ++t) {
      a = transition(a, emb, p, cfg);
      b = transition(b, emb2, p, cfg);
    }
    // g^2 aggregates every h^1, so by t = 3 all word hiddens move.
    for (Index i = 0; i < n + 2; ++i) {
      double diff = 0.0;
      for (Index q = 0; q < cfg.hidden; ++q)
        diff += std::abs(a.word_h(i, q) - b.word_h(i, q));
      CHECK(diff > 0.0);
    }
  }
}

TEST_CASE("encode: zero parameters give zero outputs; m=0 returns the mean") {
  SLstmConfig cfg;
  cfg.hidden = 4;
  cfg.input_size = 3;
  cfg.steps = 4;
  SLstmParams p = SLstmParams::create(cfg, 41);
  zero_all(p);
  Tensor emb = rand_emb(6, 3, 42);
  Encoded enc = encode(emb, p, cfg);
  CHECK(enc.word_h.mat().cwiseAbs().maxCoeff() == 0.0);
  CHECK(enc.g.mat().cwiseAbs().maxCoeff() == 0.0);

  SLstmConfig cm0 = cfg;
  cm0.sentence_nodes = 0;
  SLstmParams p0 = SLstmParams::create(cm0, 43);
  Encoded e0 = encode(emb, p0, cm0);
  Tensor mean = mean_rows(e0.word_h);
  CHECK(max_abs_diff(e0.g, mean) == 0.0);
}

TEST_CASE("hidden states stay strictly inside (-1, 1)") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    SLstmConfig cfg;
    cfg.hidden = 6;
    cfg.input_size = 4;
    cfg.steps = 5;
    cfg.window = 1 + trial % 2;
    cfg.sentence_nodes = trial % 3;
    SLstmParams p = SLstmParams::create(cfg, 800 + trial);
    // Inflate parameters to push the gates toward saturation.
    for (Parameter* q : p.parameters()) q->value.mat() *= 4.0;
    Tensor emb = uniform(9, 4, 2, -3.0, 3.0, rng);
    SLstmState s = init_state(7, p, cfg);
    for (int t = 0; t < cfg.steps; ++t) {
      s = transition(s, emb, p, cfg);
      CHECK(s.word_h.mat().cwiseAbs().maxCoeff() < 1.0);
      if (cfg.sentence_nodes > 0)
        CHECK(s.sent_g.mat().cwiseAbs().maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("gate families are normalized for random inputs") {
  for (int trial = 0; trial < 50; ++trial) {
    SLstmConfig cfg;
    cfg.hidden = 2 + static_cast<Index>(trial % 5);
    cfg.input_size = 3;
    cfg.window = 1 + trial % 2;
    cfg.sentence_nodes = trial % 3;
    SLstmParams p = SLstmParams::create(cfg, 900 + trial);
    Index n = 1 + trial % 6;
    Tensor emb = rand_emb(n + 2, 3, 1000 + trial);
    SLstmState s = init_state(n, p, cfg);
    s = transition(s, emb, p, cfg);  // informative state
    for (Index i = 0; i < n + 2; ++i) {
      GateBundle g = word_gates(i, s, row(emb, i), p, cfg);
      for (Index q = 0; q < cfg.hidden; ++q) {
        double sum = g.i(q) + g.f(q);
        for (const Tensor& lk : g.l) sum += lk(q);
        for (const Tensor& rk : g.r) sum += rk(q);
        if (cfg.sentence_nodes >= 1) sum += g.s(q);
        CHECK(std::abs(sum - 1.0) <= 1e-10);
      }
    }
    if (cfg.sentence_nodes >= 1) {
      SentenceGates sg = sentence_gates(s, p, cfg, 0);
      for (Index q = 0; q < cfg.hidden; ++q) {
        double sum = sg.f_g(q);
        for (Index i = 0; i < n + 2; ++i) sum += sg.f_words(i, q);
        CHECK(std::abs(sum - 1.0) <= 1e-10);
      }
    }
  }
}

TEST_CASE("traced encoder matches the value path") {
  for (auto [w, m] : {std::pair<int, int>{1, 1}, {2, 2}, {1, 0}, {2, 0},
                      {1, 2}}) {
    SLstmConfig cfg;
    cfg.hidden = 5;
    cfg.input_size = 4;
    cfg.steps = 3;
    cfg.window = w;
    cfg.sentence_nodes = m;
    SLstmParams p = SLstmParams::create(cfg, 50 + w * 10 + m);
    Tensor emb = rand_emb(7, 4, 60 + w * 10 + m);
    Encoded value = encode(emb, p, cfg);
    ad::Tape tape;
    TracedEncoded traced = encode_traced(tape, tape.constant(emb), p);
    CHECK(max_abs_diff(value.word_h, traced.word_h.value()) < 1e-12);
    CHECK(max_abs_diff(value.g, traced.g.value()) < 1e-12);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  SLstmConfig cfg;
  cfg.hidden = 4;
  cfg.input_size = 3;
  cfg.steps = 3;
  SLstmParams p = SLstmParams::create(cfg, 71);
  Tensor emb = rand_emb(7, 3, 72);  // n = 5
  std::vector<Parameter*> params = p.parameters();
  auto f = [&](bool with_grad) {
    ad::Tape tape;
    TracedEncoded enc = encode_traced(tape, tape.constant(emb), p);
    // Scaled down so finite-difference rounding noise on near-zero
    // coordinates stays below the relative-error floor.
    ad::Var loss = ad::scale_const(
        ad::add(ad::sumsq(enc.word_h), ad::sumsq(enc.g)), 0.01);
    if (with_grad) tape.backward(loss);
    return loss.value().value();
  };
  ad::GradCheckReport rep = ad::grad_check(params, f, 1e-5, 1e-4);
  CHECK(rep.worst_rel_err < 1e-4);
}

TEST_SUITE_END();
