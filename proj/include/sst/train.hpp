#pragma once

#include "sst/data.hpp"
#include "sst/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sst {

struct TrainConfig {
  double lr = 0.001;
  double lr_decay = 0.97;  // per epoch
  double clip_norm = 3.0;
  double l2 = 0.001;
  double dropout = 0.5;
  // Dropout placement: on the embedding rows entering the encoder and/or on
  // the hidden states entering the head.
  bool dropout_embeddings = false;
  bool dropout_hidden = true;
  int batch_size = 10;
  int epochs = 10;
  int workers = 1;
  uint64_t seed = 1;
  bool clip_per_value = false;  // alternative reading of "clipped at 3"
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments;
};

/// Standard Adam update with bias correction. Aborts with the parameter
/// name on non-finite gradients.
void adam_step(std::span<Parameter* const> params, AdamState& state,
               double lr_effective);

double effective_lr(const TrainConfig& cfg, int epoch_index);

/// Global-norm clipping: scales all gradients by clip_norm / norm when the
/// joint L2 norm exceeds clip_norm. Returns the applied scale (1 if none).
double clip_gradients(std::span<Parameter* const> params, double clip_norm);

/// Inverted dropout mask: 0 with probability rate, else 1/(1-rate).
Tensor dropout_mask(Index rows, Index cols, int rank, double rate,
                    uint64_t seed);

/// Either kind of dataset behind one interface.
struct Dataset {
  bool tagging = false;
  std::vector<data::ClassificationExample> cls;
  std::vector<data::TaggingExample> tag;
  std::vector<std::string> label_names;  // class or tag names

  size_t size() const { return tagging ? tag.size() : cls.size(); }
  size_t length(size_t i) const {
    return tagging ? tag[i].tokens.size() : cls[i].tokens.size();
  }
  static Dataset classification(data::ClassificationData d);
  static Dataset tagging_of(data::TaggingData d);
};

/// Length-bucketed batches: indices sorted by length (ties by index),
/// grouped contiguously, batch order shuffled with the given seed.
std::vector<std::vector<size_t>> length_buckets(const Dataset& ds,
                                                int batch_size,
                                                uint64_t shuffle_seed);

struct EpochResult {
  double train_loss = 0.0;  // mean over batches of NLL + L2 term
  double seconds = 0.0;
  int skipped_batches = 0;
};

EpochResult train_epoch(Model& model, const Dataset& train,
                        const TrainConfig& cfg, AdamState& adam,
                        int epoch_index);

/// Classification accuracy or token accuracy, in percent.
double evaluate(Model& model, const Dataset& ds, int workers = 1);

/// Per-sequence predicted tag ids (tagging datasets).
std::vector<std::vector<int>> predict_all_tags(Model& model,
                                               const Dataset& ds,
                                               int workers = 1);

/// L2 regularization covers weight matrices; embeddings and bias/initial
/// vectors are excluded.
bool l2_applies(const Parameter& p);
double l2_term(std::span<Parameter* const> params, double l2);

}  // namespace sst
