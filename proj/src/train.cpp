#include "sst/train.hpp"

#include "sst/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sst {

namespace {

// Distinct, well-mixed stream per (seed, epoch, batch, item).
uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9e3779b97f4a7c15ull + (b << 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace

void adam_step(std::span<Parameter* const> params, AdamState& state,
               double lr_effective) {
  ++state.step;
  double b1 = state.beta1, b2 = state.beta2;
  double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (Parameter* p : params) {
    if (!all_finite(p->grad)) {
      throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                               p->name);
    }
    auto [it, inserted] = state.moments.try_emplace(
        p->name, std::make_pair(p->value.zeros_like(), p->value.zeros_like()));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    m.mat() = b1 * m.mat() + (1.0 - b1) * p->grad.mat();
    v.mat().array() =
        b2 * v.mat().array() + (1.0 - b2) * p->grad.mat().array().square();
    p->value.mat().array() -= lr_effective * (m.mat().array() / corr1) /
                              ((v.mat().array() / corr2).sqrt() + state.eps);
  }
}

double effective_lr(const TrainConfig& cfg, int epoch_index) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch_index));
}

double clip_gradients(std::span<Parameter* const> params, double clip_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.mat().squaredNorm();
  double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return 1.0;
  double scale = clip_norm / norm;
  for (Parameter* p : params) p->grad.mat() *= scale;
  return scale;
}

Tensor dropout_mask(Index rows, Index cols, int rank, double rate,
                    uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  Tensor mask(Mat::Ones(rows, cols), rank);
  if (rate == 0.0) return mask;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      mask(i, j) = u(rng) < rate ? 0.0 : keep;
    }
  }
  return mask;
}

Dataset Dataset::classification(data::ClassificationData d) {
  Dataset ds;
  ds.tagging = false;
  ds.cls = std::move(d.examples);
  ds.label_names = std::move(d.label_names);
  return ds;
}

Dataset Dataset::tagging_of(data::TaggingData d) {
  Dataset ds;
  ds.tagging = true;
  ds.tag = std::move(d.examples);
  ds.label_names = std::move(d.tag_names);
  return ds;
}

std::vector<std::vector<size_t>> length_buckets(const Dataset& ds,
                                                int batch_size,
                                                uint64_t shuffle_seed) {
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return ds.length(a) < ds.length(b);
  });
  std::vector<std::vector<size_t>> batches;
  for (size_t at = 0; at < order.size(); at += batch_size) {
    size_t end = std::min(order.size(), at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

bool l2_applies(const Parameter& p) {
  return p.value.rank() == 2 && p.name != "emb.table";
}

double l2_term(std::span<Parameter* const> params, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (l2_applies(*p)) sq += sumsq(p->value);
  }
  return 0.5 * l2 * sq;
}

EpochResult train_epoch(Model& model, const Dataset& train,
                        const TrainConfig& cfg, AdamState& adam,
                        int epoch_index) {
  if (train.size() == 0) {
    throw std::invalid_argument("train_epoch: empty dataset");
  }
  auto t0 = std::chrono::steady_clock::now();
  std::vector<Parameter*> params = model.parameters();
  uint64_t epoch_seed = mix(cfg.seed, 0x5e55ull + epoch_index);
  std::vector<std::vector<size_t>> batches =
      length_buckets(train, cfg.batch_size, epoch_seed);
  double lr = effective_lr(cfg, epoch_index);

  EpochResult result;
  double loss_sum = 0.0;
  int batch_count = 0;

  for (size_t b = 0; b < batches.size(); ++b) {
    const std::vector<size_t>& batch = batches[b];
    if (batch.empty()) {
      ++result.skipped_batches;
      continue;
    }
    size_t bn = batch.size();
    std::vector<std::unique_ptr<ad::Tape>> tapes(bn);
    std::vector<double> item_loss(bn, 0.0);

    // Forward/backward per item; gradients stay in per-tape buffers so the
    // items can run on any worker, then merge below in item order.
    parallel_for(static_cast<int64_t>(bn), cfg.workers,
                 [&](int64_t begin, int64_t end) {
                   for (int64_t k = begin; k < end; ++k) {
                     size_t idx = batch[k];
                     tapes[k] = std::make_unique<ad::Tape>();
                     ad::Tape& tape = *tapes[k];
                     Tensor emb_mask, head_mask;
                     const Tensor* emb_ptr = nullptr;
                     const Tensor* head_ptr = nullptr;
                     Index rows = static_cast<Index>(train.length(idx));
                     if (cfg.dropout > 0.0 && cfg.dropout_embeddings) {
                       emb_mask = dropout_mask(
                           rows, model.cfg.emb_dim, 2, cfg.dropout,
                           mix(mix(epoch_seed, b), 0xd0ull + k));
                       emb_ptr = &emb_mask;
                     }
                     if (cfg.dropout > 0.0 && cfg.dropout_hidden) {
                       head_mask = dropout_mask(
                           rows, model.encoder_width(), 2, cfg.dropout,
                           mix(mix(epoch_seed, b), 0x4000ull + k));
                       head_ptr = &head_mask;
                     }
                     std::vector<Tensor> inter;
                     if (cfg.dropout > 0.0 && model.bilstm.size() > 1) {
                       for (size_t l = 1; l < model.bilstm.size(); ++l) {
                         inter.push_back(dropout_mask(
                             rows, 2 * model.cfg.hidden, 2, cfg.dropout,
                             mix(mix(epoch_seed, b), 0x8000ull + 16 * k + l)));
                       }
                     }
                     ad::Var loss =
                         train.tagging
                             ? model.tagging_loss(tape, train.tag[idx],
                                                  emb_ptr, head_ptr, inter)
                             : model.classification_loss(tape, train.cls[idx],
                                                         emb_ptr, head_ptr,
                                                         inter);
                     item_loss[k] = loss.value().value();
                     tape.backward_local(loss,
                                         1.0 / static_cast<double>(bn));
                   }
                 });
    for (size_t k = 0; k < bn; ++k) tapes[k]->flush_param_grads();
    tapes.clear();

    double nll =
        std::accumulate(item_loss.begin(), item_loss.end(), 0.0) / bn;
    double reg = l2_term(params, cfg.l2);
    if (cfg.l2 > 0.0) {
      for (Parameter* p : params) {
        if (l2_applies(*p)) p->grad.mat() += cfg.l2 * p->value.mat();
      }
    }
    if (cfg.clip_per_value) {
      for (Parameter* p : params) {
        p->grad.mat() = p->grad.mat().cwiseMax(-cfg.clip_norm)
                            .cwiseMin(cfg.clip_norm);
      }
    } else {
      clip_gradients(params, cfg.clip_norm);
    }
    adam_step(params, adam, lr);
    for (Parameter* p : params) p->zero_grad();

    loss_sum += nll + reg;
    ++batch_count;
  }

  result.train_loss = batch_count ? loss_sum / batch_count : 0.0;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

double evaluate(Model& model, const Dataset& ds, int workers) {
  size_t n = ds.size();
  if (n == 0) return 0.0;
  if (ds.tagging) {
    std::vector<std::vector<int>> gold, pred;
    gold.reserve(n);
    for (const auto& ex : ds.tag) gold.push_back(ex.tags);
    pred = predict_all_tags(model, ds, workers);
    long total = 0, correct = 0;
    for (size_t s = 0; s < n; ++s) {
      for (size_t i = 0; i < gold[s].size(); ++i) {
        ++total;
        if (gold[s][i] == pred[s][i]) ++correct;
      }
    }
    return total ? 100.0 * correct / total : 0.0;
  }
  std::vector<int> pred(n);
  parallel_for(static_cast<int64_t>(n), workers,
               [&](int64_t begin, int64_t end) {
                 for (int64_t k = begin; k < end; ++k) {
                   pred[k] = model.predict_class(ds.cls[k].tokens);
                 }
               });
  long correct = 0;
  for (size_t k = 0; k < n; ++k) {
    if (pred[k] == ds.cls[k].label) ++correct;
  }
  return 100.0 * correct / n;
}

std::vector<std::vector<int>> predict_all_tags(Model& model, const Dataset& ds,
                                               int workers) {
  size_t n = ds.tag.size();
  std::vector<std::vector<int>> pred(n);
  parallel_for(static_cast<int64_t>(n), workers,
               [&](int64_t begin, int64_t end) {
                 for (int64_t k = begin; k < end; ++k) {
                   pred[k] = model.predict_tags(ds.tag[k].tokens);
                 }
               });
  return pred;
}

}  // namespace sst
