#pragma once

#include "sst/autodiff.hpp"
#include "sst/tensor.hpp"

#include <span>
#include <vector>

namespace sst {

struct ClassifierParams {
  Index n_classes = 0;
  Parameter w;  // n_classes x g_size
  Parameter b;  // n_classes

  static ClassifierParams create(Index n_classes, Index g_size, uint64_t seed,
                                 const std::string& prefix = "clf");
  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

/// softmax(W g + b).
Tensor classify(const Tensor& g, const ClassifierParams& params);

/// Negative log-likelihood of `label` under classify(g).
ad::Var classify_nll_traced(ad::Tape& tape, ad::Var g, ClassifierParams& params,
                            int label);

struct AttentionParams {
  Parameter w;  // a x h_size
  Parameter b;  // a
  Parameter u;  // a

  static AttentionParams create(Index attn_size, Index h_size, uint64_t seed,
                                const std::string& prefix = "attn");
  std::vector<Parameter*> parameters() { return {&w, &b, &u}; }
};

/// Additive attention pooling over all rows of word_h (boundary tokens
/// included): alpha_t = softmax_t(u . tanh(W h_t + b)), g = sum alpha_t h_t.
Tensor attend(const Tensor& word_h, const AttentionParams& params);
ad::Var attend_traced(ad::Tape& tape, ad::Var word_h, AttentionParams& params);

/// Linear-chain CRF scoring label pairs: psi_i(a, b, h) =
/// exp(W[a,b] . h_i + bias[a,b]). The label set is augmented with START
/// (only ever a source) and STOP (only ever a target, bias-only: its weight
/// rows stay zero because no h accompanies the terminal factor).
struct CrfParams {
  Index n_labels = 0;
  Index h_size = 0;
  Parameter w;  // (L+1)^2 x h_size, row pair_index(a, b)
  Parameter b;  // (L+1)^2

  static CrfParams create(Index n_labels, Index h_size, uint64_t seed,
                          const std::string& prefix = "crf");
  std::vector<Parameter*> parameters() { return {&w, &b}; }

  Index start() const { return n_labels; }  // as source
  Index stop() const { return n_labels; }   // as target
  Index pair_index(Index src, Index tgt) const {
    return src * (n_labels + 1) + tgt;
  }
};

/// -log P(labels | word_h) via the log-space forward algorithm. word_h holds
/// one row per tagged position (boundary rows already dropped).
double crf_nll(const Tensor& word_h, std::span<const int> labels,
               const CrfParams& params);
ad::Var crf_nll_traced(ad::Tape& tape, ad::Var word_h, CrfParams& params,
                       std::span<const int> labels);

/// Viterbi decoding; ties break toward the smallest label index.
std::vector<int> crf_decode(const Tensor& word_h, const CrfParams& params);

}  // namespace sst
