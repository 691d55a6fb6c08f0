#pragma once

#include "sst/autodiff.hpp"
#include "sst/tensor.hpp"

#include <utility>
#include <vector>

namespace sst {

/// Sentence-state LSTM configuration. One recurrent step updates all word
/// sub-states and all sentence-level nodes simultaneously; the step count is
/// fixed and does not scale with sentence length.
struct SLstmConfig {
  Index hidden = 300;
  int steps = 9;
  int window = 1;
  int sentence_nodes = 1;
  Index input_size = 300;
};

/// All weights of the encoder. Word-level gates follow the fixed order
/// i, l_1..l_w, r_1..r_w, f, s, o, u (s present only with sentence nodes);
/// the first 2w+2 (or 2w+3) of them are jointly softmax-normalized.
struct SLstmParams {
  SLstmConfig cfg;
  std::vector<Parameter> w;  // d x (2w+1)d, per gate
  std::vector<Parameter> u;  // d x input_size, per gate
  std::vector<Parameter> v;  // d x d, per gate; empty when sentence_nodes == 0
  std::vector<Parameter> b;  // d, per gate
  // Sentence-node parameters (empty when sentence_nodes == 0), in order:
  // wg, ug, bg (own forget), wfw, ufw, bfw (per-word forgets),
  // wog, uog, bog (output gate).
  std::vector<Parameter> sent;
  Parameter h0;  // shared initial hidden for every word and sentence node

  int n_norm() const {
    return 2 * cfg.window + 2 + (cfg.sentence_nodes >= 1 ? 1 : 0);
  }
  int n_gates() const { return n_norm() + 2; }
  int idx_i() const { return 0; }
  int idx_l(int k) const { return 1 + k; }  // k in [0, w): offset -(k+1)
  int idx_r(int k) const { return 1 + cfg.window + k; }
  int idx_f() const { return 1 + 2 * cfg.window; }
  int idx_s() const { return 2 + 2 * cfg.window; }
  int idx_o() const { return n_norm(); }
  int idx_u() const { return n_norm() + 1; }

  static std::string gate_name(const SLstmConfig& cfg, int g);
  static SLstmParams create(const SLstmConfig& cfg, uint64_t seed);

  std::vector<Parameter*> parameters();
};

/// Full graph state H^t: one (h, c) pair per word (boundary tokens included)
/// plus one (g, c) pair per sentence-level node.
struct SLstmState {
  Tensor word_h;  // (n+2) x d
  Tensor word_c;  // (n+2) x d
  Tensor sent_g;  // m x d
  Tensor sent_c;  // m x d
  int t = 0;
};

/// All word rows and sentence rows start at h0; cells start at zero.
SLstmState init_state(Index n, const SLstmParams& params,
                      const SLstmConfig& cfg);

/// Normalized gate family of one word update: i + sum(l) + sum(r) + f (+ s)
/// equals one per coordinate. o and u are the unnormalized output gate and
/// candidate input.
struct GateBundle {
  Tensor i;
  std::vector<Tensor> l;  // offsets -1..-w
  std::vector<Tensor> r;  // offsets +1..+w
  Tensor f;
  Tensor s;  // empty when sentence_nodes == 0
  Tensor o;
  Tensor u;
};

GateBundle word_gates(Index i, const SLstmState& prev, const Tensor& x_i,
                      const SLstmParams& params, const SLstmConfig& cfg);

/// Normalized forget family of one sentence-node update: the n+2 word rows
/// plus f_g sum to one per coordinate.
struct SentenceGates {
  Tensor f_words;  // (n+2) x d
  Tensor f_g;      // d
  Tensor o;        // d
};

SentenceGates sentence_gates(const SLstmState& prev, const SLstmParams& params,
                             const SLstmConfig& cfg, int node);

/// One word sub-state update from the previous full state. Out-of-range
/// neighbors contribute zero vectors for both hidden and cell.
std::pair<Tensor, Tensor> word_step(Index i, const SLstmState& prev,
                                    const Tensor& x_i,
                                    const SLstmParams& params,
                                    const SLstmConfig& cfg);

/// One sentence-node update from the previous full state.
std::pair<Tensor, Tensor> sentence_step(const SLstmState& prev,
                                        const SLstmParams& params,
                                        const SLstmConfig& cfg, int node);

/// Simultaneous update of every sub-state; reads `prev` only. Word updates
/// are independent and may be computed by several workers.
SLstmState transition(const SLstmState& prev, const Tensor& embeddings,
                      const SLstmParams& params, const SLstmConfig& cfg,
                      int workers = 1);

struct Encoded {
  Tensor word_h;  // (n+2) x d
  Tensor g;       // d
};

/// Applies `steps` transitions from the initial state. With sentence nodes,
/// g is the first node's hidden; without, the mean of the word hiddens.
Encoded encode(const Tensor& embeddings, const SLstmParams& params,
               const SLstmConfig& cfg, int workers = 1);

struct TracedEncoded {
  ad::Var word_h;
  ad::Var g;
};

/// Tape-recorded forward identical in math to encode(); word updates are
/// expressed as whole-sentence matrix products.
TracedEncoded encode_traced(ad::Tape& tape, ad::Var x, SLstmParams& params);

}  // namespace sst
