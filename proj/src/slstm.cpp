#include "sst/slstm.hpp"

#include "sst/parallel.hpp"

#include <stdexcept>

namespace sst {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

std::string SLstmParams::gate_name(const SLstmConfig& cfg, int g) {
  int w = cfg.window;
  if (g == 0) return "i";
  if (g <= w) return "l" + std::to_string(g);
  if (g <= 2 * w) return "r" + std::to_string(g - w);
  if (g == 2 * w + 1) return "f";
  int norm = 2 * w + 2 + (cfg.sentence_nodes >= 1 ? 1 : 0);
  if (cfg.sentence_nodes >= 1 && g == 2 * w + 2) return "s";
  if (g == norm) return "o";
  return "u";
}

SLstmParams SLstmParams::create(const SLstmConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Index d = cfg.hidden;
  Index xi = (2 * cfg.window + 1) * d;
  SLstmParams p{cfg, {}, {}, {}, {}, {}, Parameter("slstm.h0", Tensor::vector(d))};
  int ng = p.n_gates();
  for (int g = 0; g < ng; ++g) {
    std::string gn = gate_name(cfg, g);
    p.w.emplace_back("slstm." + gn + ".w", glorot(d, xi, rng));
    p.u.emplace_back("slstm." + gn + ".u", glorot(d, cfg.input_size, rng));
    if (cfg.sentence_nodes >= 1) {
      p.v.emplace_back("slstm." + gn + ".v", glorot(d, d, rng));
    }
    // Input and output gates start open so the first transitions already
    // move signal; the normalized family still sums to one.
    double bias = g == p.idx_i() ? 1.5 : (g == p.idx_o() ? 1.0 : 0.0);
    Tensor b = Tensor::vector(d);
    b.mat().array() = bias;
    p.b.emplace_back("slstm." + gn + ".b", std::move(b));
  }
  if (cfg.sentence_nodes >= 1) {
    const char* names[] = {"wg", "ug", "bg", "wfw", "ufw",
                           "bfw", "wog", "uog", "bog"};
    for (int k = 0; k < 9; ++k) {
      bool is_bias = (k % 3 == 2);
      Tensor init = is_bias ? Tensor::vector(d) : glorot(d, d, rng);
      if (k == 8) init.mat().array() = 1.0;  // open sentence output gate
      p.sent.emplace_back(std::string("slstm.sent.") + names[k],
                          std::move(init));
    }
  }
  return p;
}

std::vector<Parameter*> SLstmParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : w) out.push_back(&p);
  for (auto& p : u) out.push_back(&p);
  for (auto& p : v) out.push_back(&p);
  for (auto& p : b) out.push_back(&p);
  for (auto& p : sent) out.push_back(&p);
  out.push_back(&h0);
  return out;
}

SLstmState init_state(Index n, const SLstmParams& params,
                      const SLstmConfig& cfg) {
  require(n >= 0, "init_state: negative sentence length");
  Index rows = n + 2;
  Index d = cfg.hidden;
  int m = cfg.sentence_nodes;
  SLstmState s;
  s.word_h = Tensor::matrix(rows, d);
  s.word_h.mat().rowwise() = params.h0.value.mat().col(0).transpose();
  s.word_c = Tensor::matrix(rows, d);
  s.sent_g = Tensor::matrix(m, d);
  if (m > 0)
    s.sent_g.mat().rowwise() = params.h0.value.mat().col(0).transpose();
  s.sent_c = Tensor::matrix(m, d);
  s.t = 0;
  return s;
}

namespace {

// Mean sentence hidden/cell seen by word updates (single node: that node).
Tensor sent_mean(const Tensor& rows_md) {
  return mean_rows(rows_md);
}

}  // namespace

GateBundle word_gates(Index i, const SLstmState& prev, const Tensor& x_i,
                      const SLstmParams& params, const SLstmConfig& cfg) {
  Index rows = prev.word_h.rows();
  require(i >= 0 && i < rows,
          "word_step: token index " + std::to_string(i) + " out of range");
  Index d = cfg.hidden;
  int w = cfg.window;
  int m = cfg.sentence_nodes;

  // xi = [h_{i-w}, ..., h_i, ..., h_{i+w}], zeros outside the sentence.
  Tensor xi = Tensor::vector((2 * w + 1) * d);
  for (int o = -w; o <= w; ++o) {
    Index src = i + o;
    if (src < 0 || src >= rows) continue;
    xi.mat().middleRows((o + w) * d, d) =
        prev.word_h.mat().row(src).transpose();
  }

  Tensor gbar;
  if (m >= 1) gbar = sent_mean(prev.sent_g);

  int ng = params.n_gates();
  std::vector<Tensor> act(ng);
  for (int g = 0; g < ng; ++g) {
    Tensor pre = add(matmul(params.w[g].value, xi),
                     matmul(params.u[g].value, x_i));
    if (m >= 1) pre = add(pre, matmul(params.v[g].value, gbar));
    pre = add(pre, params.b[g].value);
    act[g] = (g == params.idx_u()) ? tanh(pre) : sigmoid(pre);
  }

  std::vector<Tensor> fam(act.begin(), act.begin() + params.n_norm());
  std::vector<Tensor> norm = softmax_group(fam);

  GateBundle gates;
  gates.i = std::move(norm[params.idx_i()]);
  for (int k = 0; k < w; ++k) {
    gates.l.push_back(std::move(norm[params.idx_l(k)]));
    gates.r.push_back(std::move(norm[params.idx_r(k)]));
  }
  gates.f = std::move(norm[params.idx_f()]);
  if (m >= 1) gates.s = std::move(norm[params.idx_s()]);
  gates.o = std::move(act[params.idx_o()]);
  gates.u = std::move(act[params.idx_u()]);
  return gates;
}

std::pair<Tensor, Tensor> word_step(Index i, const SLstmState& prev,
                                    const Tensor& x_i,
                                    const SLstmParams& params,
                                    const SLstmConfig& cfg) {
  Index rows = prev.word_h.rows();
  int w = cfg.window;
  int m = cfg.sentence_nodes;
  GateBundle gates = word_gates(i, prev, x_i, params, cfg);

  Tensor c = cwise_mul(gates.i, gates.u);
  for (int k = 0; k < w; ++k) {
    Index left = i - (k + 1);
    if (left >= 0) {
      c = add(c, cwise_mul(gates.l[k], row(prev.word_c, left)));
    }
    Index right = i + (k + 1);
    if (right < rows) {
      c = add(c, cwise_mul(gates.r[k], row(prev.word_c, right)));
    }
  }
  c = add(c, cwise_mul(gates.f, row(prev.word_c, i)));
  if (m >= 1) c = add(c, cwise_mul(gates.s, sent_mean(prev.sent_c)));

  Tensor h = cwise_mul(gates.o, tanh(c));
  return {std::move(h), std::move(c)};
}

SentenceGates sentence_gates(const SLstmState& prev, const SLstmParams& params,
                             const SLstmConfig& cfg, int node) {
  int m = cfg.sentence_nodes;
  if (m == 0) throw std::runtime_error("sentence_step: no sentence nodes");
  require(node >= 0 && node < m, "sentence_step: node index out of range");
  Index rows = prev.word_h.rows();

  const Tensor& wg = params.sent[0].value;
  const Tensor& ug = params.sent[1].value;
  const Tensor& bg = params.sent[2].value;
  const Tensor& wfw = params.sent[3].value;
  const Tensor& ufw = params.sent[4].value;
  const Tensor& bfw = params.sent[5].value;
  const Tensor& wog = params.sent[6].value;
  const Tensor& uog = params.sent[7].value;
  const Tensor& bog = params.sent[8].value;

  Tensor g_prev = row(prev.sent_g, node);

  Tensor hbar = mean_rows(prev.word_h);
  if (m >= 2) {
    // Inter-node message: mean of the other nodes' previous hiddens.
    Tensor other = Tensor::vector(cfg.hidden);
    for (int j = 0; j < m; ++j) {
      if (j == node) continue;
      other.mat() += prev.sent_g.mat().row(j).transpose();
    }
    other.mat() /= static_cast<double>(m - 1);
    hbar = add(hbar, other);
  }

  Tensor fg_hat =
      sigmoid(add(add(matmul(wg, g_prev), matmul(ug, hbar)), bg));
  Tensor shared = add(matmul(wfw, g_prev), bfw);  // same for every word
  Tensor fw_hat = prev.word_h.zeros_like();
  fw_hat.mat() = prev.word_h.mat() * ufw.mat().transpose();
  fw_hat.mat().rowwise() += shared.mat().col(0).transpose();
  fw_hat = sigmoid(fw_hat);

  Tensor joint = concat_rows(std::vector<Tensor>{
      fw_hat, Tensor(fg_hat.mat().transpose(), 2)});
  Tensor f_all = softmax_over_rows(joint);

  SentenceGates gates;
  gates.f_words = slice_rows(f_all, 0, rows);
  gates.f_g = row(f_all, rows);
  gates.o = sigmoid(add(add(matmul(wog, g_prev), matmul(uog, hbar)), bog));
  return gates;
}

std::pair<Tensor, Tensor> sentence_step(const SLstmState& prev,
                                        const SLstmParams& params,
                                        const SLstmConfig& cfg, int node) {
  Index rows = prev.word_h.rows();
  SentenceGates gates = sentence_gates(prev, params, cfg, node);
  Tensor c_prev = row(prev.sent_c, node);

  Tensor c = Tensor::vector(cfg.hidden);
  c.mat() = gates.f_words.mat()
                .cwiseProduct(prev.word_c.mat())
                .colwise()
                .sum()
                .transpose();
  c.mat() += gates.f_g.mat().cwiseProduct(c_prev.mat());

  Tensor g = cwise_mul(gates.o, tanh(c));
  return {std::move(g), std::move(c)};
}

SLstmState transition(const SLstmState& prev, const Tensor& embeddings,
                      const SLstmParams& params, const SLstmConfig& cfg,
                      int workers) {
  Index rows = prev.word_h.rows();
  require(embeddings.rows() == rows,
          "transition: embeddings rows " + std::to_string(embeddings.rows()) +
              " do not match state rows " + std::to_string(rows));
  SLstmState next;
  next.word_h = Tensor::matrix(rows, cfg.hidden);
  next.word_c = Tensor::matrix(rows, cfg.hidden);
  next.sent_g = Tensor::matrix(cfg.sentence_nodes, cfg.hidden);
  next.sent_c = Tensor::matrix(cfg.sentence_nodes, cfg.hidden);
  next.t = prev.t + 1;

  parallel_for(rows, workers, [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      auto [h, c] = word_step(i, prev, row(embeddings, i), params, cfg);
      next.word_h.mat().row(i) = h.mat().col(0).transpose();
      next.word_c.mat().row(i) = c.mat().col(0).transpose();
    }
  });

  for (int j = 0; j < cfg.sentence_nodes; ++j) {
    auto [g, c] = sentence_step(prev, params, cfg, j);
    next.sent_g.mat().row(j) = g.mat().col(0).transpose();
    next.sent_c.mat().row(j) = c.mat().col(0).transpose();
  }
  return next;
}

Encoded encode(const Tensor& embeddings, const SLstmParams& params,
               const SLstmConfig& cfg, int workers) {
  require(cfg.steps >= 1, "encode: steps must be >= 1");
  SLstmState s = init_state(embeddings.rows() - 2, params, cfg);
  for (int t = 0; t < cfg.steps; ++t) {
    s = transition(s, embeddings, params, cfg, workers);
  }
  Encoded out;
  out.g = cfg.sentence_nodes >= 1 ? row(s.sent_g, 0) : mean_rows(s.word_h);
  out.word_h = std::move(s.word_h);
  return out;
}

TracedEncoded encode_traced(ad::Tape& tape, ad::Var x, SLstmParams& params) {
  using namespace ad;
  const SLstmConfig& cfg = params.cfg;
  Index rows = x.value().rows();
  Index d = cfg.hidden;
  int w = cfg.window;
  int m = cfg.sentence_nodes;
  int ng = params.n_gates();

  // Stack every gate's [W | U] once per tape; one matrix product per
  // transition then computes all gate pre-activations for all words.
  std::vector<Var> blocks;
  for (int g = 0; g < ng; ++g) {
    std::vector<Var> wu{tape.param(params.w[g]), tape.param(params.u[g])};
    blocks.push_back(concat_cols(wu));
  }
  Var big = concat_rows(blocks);
  std::vector<Var> bvars;
  for (int g = 0; g < ng; ++g) bvars.push_back(tape.param(params.b[g]));
  Var b_all = concat_rows(bvars);
  Var vbig;
  if (m >= 1) {
    std::vector<Var> vvars;
    for (int g = 0; g < ng; ++g) vvars.push_back(tape.param(params.v[g]));
    vbig = concat_rows(vvars);
  }

  Var h0 = tape.param(params.h0);
  Var ones = tape.constant(Tensor(Mat::Ones(rows, 1), 2));
  Var H = matmul(ones, h0, false, true);  // every row starts at h0
  Var C = tape.constant(Tensor::matrix(rows, d));
  std::vector<Var> G(m, h0), CG;
  for (int j = 0; j < m; ++j)
    CG.push_back(tape.constant(Tensor::vector(d)));

  for (int step = 0; step < cfg.steps; ++step) {
    // -- word updates (whole sentence at once) --
    std::vector<Var> xi_blocks;
    for (int o = -w; o <= w; ++o)
      xi_blocks.push_back(o == 0 ? H : shift_rows(H, o));
    xi_blocks.push_back(x);
    Var xix = concat_cols(xi_blocks);
    Var pre = add_rowwise(matmul(xix, big, false, true), b_all);
    if (m >= 1) {
      Var gbar = m == 1 ? G[0] : avg(G);
      pre = add_rowwise(pre, matmul(vbig, gbar));
    }
    Var act = gate_activations(pre, params.n_norm(), d);
    auto gate = [&](int g) { return slice_cols(act, g * d, d); };

    std::vector<Var> gates, cells;
    gates.push_back(gate(params.idx_i()));
    cells.push_back(gate(params.idx_u()));
    for (int k = 0; k < w; ++k) {
      gates.push_back(gate(params.idx_l(k)));
      cells.push_back(shift_rows(C, -(k + 1)));
      gates.push_back(gate(params.idx_r(k)));
      cells.push_back(shift_rows(C, k + 1));
    }
    gates.push_back(gate(params.idx_f()));
    cells.push_back(C);
    Var c_next = mul_sum(gates, cells);
    if (m >= 1) {
      Var cgbar = m == 1 ? CG[0] : avg(CG);
      c_next = add(c_next, mul_rowwise(gate(params.idx_s()), cgbar));
    }
    Var h_next = gated_tanh(gate(params.idx_o()), c_next);

    // -- sentence-node updates (from the previous state only) --
    std::vector<Var> g_next(m), cg_next(m);
    if (m >= 1) {
      Var wg = tape.param(params.sent[0]), ug = tape.param(params.sent[1]),
          bg = tape.param(params.sent[2]), wfw = tape.param(params.sent[3]),
          ufw = tape.param(params.sent[4]), bfw = tape.param(params.sent[5]),
          wog = tape.param(params.sent[6]), uog = tape.param(params.sent[7]),
          bog = tape.param(params.sent[8]);
      Var hbar_words = mean_rows(H);
      for (int j = 0; j < m; ++j) {
        Var hbar = hbar_words;
        if (m >= 2) {
          std::vector<Var> others;
          for (int jj = 0; jj < m; ++jj)
            if (jj != j) others.push_back(G[jj]);
          hbar = add(hbar, avg(others));
        }
        Var fg_hat =
            sigmoid(add(add(matmul(wg, G[j]), matmul(ug, hbar)), bg));
        Var shared = add(matmul(wfw, G[j]), bfw);
        Var fw_hat =
            sigmoid(add_rowwise(matmul(H, ufw, false, true), shared));
        std::vector<Var> parts{fw_hat, stack_rows(std::vector<Var>{fg_hat})};
        Var f_all = softmax_over_rows(concat_rows(parts));
        Var f_words = slice_rows(f_all, 0, rows);
        Var f_g = row(f_all, rows);
        cg_next[j] = add(mul_colsum(f_words, C), mul(f_g, CG[j]));
        Var o =
            sigmoid(add(add(matmul(wog, G[j]), matmul(uog, hbar)), bog));
        g_next[j] = gated_tanh(o, cg_next[j]);
      }
    }

    H = h_next;
    C = c_next;
    G = std::move(g_next);
    CG = std::move(cg_next);
  }

  TracedEncoded out;
  out.word_h = H;
  out.g = m >= 1 ? G[0] : mean_rows(H);
  return out;
}

}  // namespace sst
