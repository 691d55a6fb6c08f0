#pragma once

#include "sst/bilstm.hpp"
#include "sst/data.hpp"
#include "sst/heads.hpp"
#include "sst/slstm.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sst {

enum class EncoderKind { SLstm, BiLstm };
enum class HeadKind { Softmax, Attention, Crf };

EncoderKind encoder_from_string(const std::string& s);
HeadKind head_from_string(const std::string& s);
std::string to_string(EncoderKind k);
std::string to_string(HeadKind k);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::SLstm;
  HeadKind head = HeadKind::Softmax;
  Index hidden = 300;
  Index emb_dim = 300;
  int steps = 9;
  int window = 1;
  int nodes = 1;
  int layers = 1;       // BiLSTM stack depth
  Index attn_size = 0;  // 0 means hidden size
  Index n_classes = 0;
  Index n_tags = 0;
  bool fine_tune_embeddings = true;
  uint64_t seed = 1;
};

/// Encoder + head + embedding table, with a single flat parameter list.
struct Model {
  ModelConfig cfg;
  Parameter embeddings;  // vocab x emb_dim
  std::optional<SLstmParams> slstm;
  std::vector<BiLstmParams> bilstm;
  std::optional<ClassifierParams> clf;
  std::optional<AttentionParams> attn;
  std::optional<CrfParams> crf;

  static Model create(const ModelConfig& cfg, Tensor embedding_init);
  std::vector<Parameter*> parameters();

  Index encoder_width() const {
    return cfg.encoder == EncoderKind::SLstm ? cfg.hidden : 2 * cfg.hidden;
  }

  /// NLL of one classification example. emb_mask (same shape as the gathered
  /// embedding rows) masks the encoder input; head_mask (one row per
  /// position, encoder width) masks the hidden states entering the head;
  /// inter_masks, when non-empty, sit between stacked BiLSTM layers.
  ad::Var classification_loss(ad::Tape& tape,
                              const data::ClassificationExample& ex,
                              const Tensor* emb_mask = nullptr,
                              const Tensor* head_mask = nullptr,
                              std::span<const Tensor> inter_masks = {});
  ad::Var tagging_loss(ad::Tape& tape, const data::TaggingExample& ex,
                       const Tensor* emb_mask = nullptr,
                       const Tensor* head_mask = nullptr,
                       std::span<const Tensor> inter_masks = {});

  int predict_class(std::span<const int> tokens, int workers = 1);
  std::vector<int> predict_tags(std::span<const int> tokens, int workers = 1);

 private:
  ad::Var traced_embed(ad::Tape& tape, std::span<const int> tokens,
                       const Tensor* emb_mask);
  TracedEncoded traced_encode(ad::Tape& tape, ad::Var x,
                              std::span<const Tensor> inter_masks);
  Encoded value_encode(std::span<const int> tokens, int workers);
};

/// Gradient-check sweep over encoder/head variants at gradient-check scale
/// (hidden 4, sentence length 5, 3 recurrent steps).
struct SweepResult {
  std::string variant;
  ad::GradCheckReport report;
};
std::vector<SweepResult> gradcheck_sweep(double eps = 1e-5, double tol = 1e-4);

}  // namespace sst
