#pragma once

#include "sst/autodiff.hpp"
#include "sst/tensor.hpp"

#include <span>
#include <utility>
#include <vector>

namespace sst {

/// One LSTM direction with softmax-normalized input/forget gates.
/// Gate order: i, f, o, u.
struct LstmParams {
  Index hidden = 0;
  Index input_size = 0;
  std::vector<Parameter> w;  // d x input_size
  std::vector<Parameter> u;  // d x d
  std::vector<Parameter> b;  // d
  Parameter h_init;
  Parameter c_init;

  static LstmParams create(Index hidden, Index input, uint64_t seed,
                           const std::string& prefix);
  std::vector<Parameter*> parameters();
};

struct BiLstmParams {
  LstmParams fwd;
  LstmParams bwd;

  static BiLstmParams create(Index hidden, Index input, uint64_t seed,
                             const std::string& prefix = "bilstm");
  std::vector<Parameter*> parameters();
};

/// Gate values of one step; i + f = 1 per coordinate after normalization.
struct LstmGates {
  Tensor i, f, o, u;
};
LstmGates lstm_gates(const Tensor& h_prev, const Tensor& x_t,
                     const LstmParams& params);

/// One recurrent step: sigmoid pre-activations, two-way per-coordinate
/// softmax over (i_hat, f_hat), c = c_prev * f + u * i, h = o * tanh(c).
std::pair<Tensor, Tensor> lstm_step(const Tensor& h_prev,
                                    const Tensor& c_prev, const Tensor& x_t,
                                    const LstmParams& params);

struct BiEncoded {
  Tensor word_h;  // (n+2) x 2d
  Tensor g;       // 2d
};

/// Forward scan consumes x_1..x_{n+1} producing the forward hiddens for
/// those positions; position 0 keeps the forward initial state. The backward
/// scan mirrors this from the other end. Rows concatenate both directions
/// and g concatenates the two final states.
BiEncoded bilstm_encode(const Tensor& embeddings, const BiLstmParams& params);

/// Stacked encoder: each layer consumes the previous layer's word hiddens.
/// Layer l must have input size 2 * hidden(l-1); g comes from the top layer.
BiEncoded stack_encode(std::span<const BiLstmParams> layers,
                       const Tensor& embeddings);

struct TracedBiEncoded {
  ad::Var word_h;
  ad::Var g;
};

/// Traced single-layer forward. `inter_dropout` masks (one per layer gap,
/// same shape as that layer's input) are applied by the stacked variant.
TracedBiEncoded bilstm_encode_traced(ad::Tape& tape, ad::Var x,
                                     BiLstmParams& params);

TracedBiEncoded stack_encode_traced(ad::Tape& tape, ad::Var x,
                                    std::span<BiLstmParams> layers,
                                    std::span<const Tensor> inter_dropout);

}  // namespace sst
