#include "sst/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

ClassifierParams ClassifierParams::create(Index n_classes, Index g_size,
                                          uint64_t seed,
                                          const std::string& prefix) {
  std::mt19937_64 rng(seed);
  return ClassifierParams{
      n_classes, Parameter(prefix + ".w", glorot(n_classes, g_size, rng)),
      Parameter(prefix + ".b", Tensor::vector(n_classes))};
}

Tensor classify(const Tensor& g, const ClassifierParams& params) {
  Tensor logits = add(matmul(params.w.value, g), params.b.value);
  return softmax_vec(logits);
}

ad::Var classify_nll_traced(ad::Tape& tape, ad::Var g,
                            ClassifierParams& params, int label) {
  using namespace ad;
  require(label >= 0 && label < params.n_classes,
          "classify: label " + std::to_string(label) + " out of range");
  Var logits =
      add(matmul(tape.param(params.w), g), tape.param(params.b));
  return sub(logsumexp(logits), pick(logits, label));
}

AttentionParams AttentionParams::create(Index attn_size, Index h_size,
                                        uint64_t seed,
                                        const std::string& prefix) {
  std::mt19937_64 rng(seed);
  return AttentionParams{
      Parameter(prefix + ".w", glorot(attn_size, h_size, rng)),
      Parameter(prefix + ".b", Tensor::vector(attn_size)),
      Parameter(prefix + ".u",
                uniform(attn_size, 1, 1, -0.1, 0.1, rng))};
}

Tensor attend(const Tensor& word_h, const AttentionParams& params) {
  // eps_t = tanh(W h_t + b), scores_t = u . eps_t, alpha = softmax(scores)
  Mat eps = word_h.mat() * params.w.value.mat().transpose();
  eps.rowwise() += params.b.value.mat().col(0).transpose();
  eps = eps.array().tanh().matrix();
  Tensor scores(eps * params.u.value.mat(), 1);
  Tensor alpha = softmax_vec(scores);
  return Tensor(word_h.mat().transpose() * alpha.mat(), 1);
}

ad::Var attend_traced(ad::Tape& tape, ad::Var word_h,
                      AttentionParams& params) {
  using namespace ad;
  Var eps = tanh(add_rowwise(matmul(word_h, tape.param(params.w), false, true),
                             tape.param(params.b)));
  Var scores = matmul(eps, tape.param(params.u));  // (n+2) x 1
  Var lse = logsumexp(scores);
  Var ones = tape.constant(
      Tensor(Mat::Ones(scores.value().rows(), 1), 1));
  Var alpha = exp(sub(scores, scale(ones, lse)));
  return matmul(word_h, alpha, true, false);  // h_size vector
}

CrfParams CrfParams::create(Index n_labels, Index h_size, uint64_t seed,
                            const std::string& prefix) {
  std::mt19937_64 rng(seed);
  Index pairs = (n_labels + 1) * (n_labels + 1);
  Tensor w = glorot(pairs, h_size, rng);
  // Terminal factors carry no hidden vector: zero the STOP-target rows.
  for (Index src = 0; src <= n_labels; ++src) {
    w.mat().row(src * (n_labels + 1) + n_labels).setZero();
  }
  return CrfParams{n_labels, h_size, Parameter(prefix + ".w", std::move(w)),
                   Parameter(prefix + ".b", Tensor::vector(pairs))};
}

namespace {

void check_labels(std::span<const int> labels, Index n_labels) {
  require(!labels.empty(), "crf: empty label sequence");
  for (int y : labels) {
    if (y < 0 || y >= n_labels) {
      throw std::invalid_argument("crf: label id " + std::to_string(y) +
                                  " out of range (L=" +
                                  std::to_string(n_labels) + ")");
    }
  }
}

}  // namespace

double crf_nll(const Tensor& word_h, std::span<const int> labels,
               const CrfParams& params) {
  check_labels(labels, params.n_labels);
  Index n = word_h.rows();
  require(static_cast<Index>(labels.size()) == n,
          "crf_nll: labels/rows mismatch");
  Index L = params.n_labels;

  // pair_scores(i) = W h_i + bias for every (src, tgt) pair at position i.
  Mat ps = word_h.mat() * params.w.value.mat().transpose();
  ps.rowwise() += params.b.value.mat().col(0).transpose();

  double gold = 0.0;
  for (Index i = 0; i < n; ++i) {
    Index src = i == 0 ? params.start() : labels[i - 1];
    gold += ps(i, params.pair_index(src, labels[i]));
  }
  gold += params.b.value(params.pair_index(labels[n - 1], params.stop()));

  // Log-space forward algorithm with per-step max subtraction.
  Eigen::VectorXd alpha(L);
  for (Index y = 0; y < L; ++y)
    alpha(y) = ps(0, params.pair_index(params.start(), y));
  for (Index i = 1; i < n; ++i) {
    Eigen::VectorXd next(L);
    for (Index y = 0; y < L; ++y) {
      Eigen::VectorXd cand(L);
      for (Index a = 0; a < L; ++a)
        cand(a) = alpha(a) + ps(i, params.pair_index(a, y));
      double mx = cand.maxCoeff();
      next(y) = mx + std::log((cand.array() - mx).exp().sum());
    }
    alpha = next;
  }
  Eigen::VectorXd fin(L);
  for (Index y = 0; y < L; ++y)
    fin(y) = alpha(y) + params.b.value(params.pair_index(y, params.stop()));
  double mx = fin.maxCoeff();
  double log_z = mx + std::log((fin.array() - mx).exp().sum());
  return log_z - gold;
}

ad::Var crf_nll_traced(ad::Tape& tape, ad::Var word_h, CrfParams& params,
                       std::span<const int> labels) {
  using namespace ad;
  check_labels(labels, params.n_labels);
  Index n = word_h.value().rows();
  require(static_cast<Index>(labels.size()) == n,
          "crf_nll: labels/rows mismatch");
  Index L = params.n_labels;

  Var ps = add_rowwise(
      matmul(word_h, tape.param(params.w), false, true),
      tape.param(params.b));
  Var bias = tape.param(params.b);

  Var gold = pick(row(ps, 0), params.pair_index(params.start(), labels[0]));
  for (Index i = 1; i < n; ++i) {
    gold = add(gold,
               pick(row(ps, i), params.pair_index(labels[i - 1], labels[i])));
  }
  gold = add(gold,
             pick(bias, params.pair_index(labels[n - 1], params.stop())));

  std::vector<Var> alpha(L);
  Var ps0 = row(ps, 0);
  for (Index y = 0; y < L; ++y)
    alpha[y] = pick(ps0, params.pair_index(params.start(), y));
  for (Index i = 1; i < n; ++i) {
    Var psi = row(ps, i);
    std::vector<Var> next(L);
    for (Index y = 0; y < L; ++y) {
      std::vector<Var> cand(L);
      for (Index a = 0; a < L; ++a)
        cand[a] = add(alpha[a], pick(psi, params.pair_index(a, y)));
      next[y] = logsumexp(stack_rows(cand));
    }
    alpha = std::move(next);
  }
  std::vector<Var> fin(L);
  for (Index y = 0; y < L; ++y) {
    fin[y] =
        add(alpha[y], pick(bias, params.pair_index(y, params.stop())));
  }
  Var log_z = logsumexp(stack_rows(fin));
  return sub(log_z, gold);
}

std::vector<int> crf_decode(const Tensor& word_h, const CrfParams& params) {
  Index n = word_h.rows();
  require(n >= 1, "crf_decode: empty input");
  Index L = params.n_labels;

  Mat ps = word_h.mat() * params.w.value.mat().transpose();
  ps.rowwise() += params.b.value.mat().col(0).transpose();

  Mat delta(n, L);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(n, L);
  for (Index y = 0; y < L; ++y)
    delta(0, y) = ps(0, params.pair_index(params.start(), y));
  for (Index i = 1; i < n; ++i) {
    for (Index y = 0; y < L; ++y) {
      int best_a = 0;
      double best = delta(i - 1, 0) + ps(i, params.pair_index(0, y));
      for (Index a = 1; a < L; ++a) {
        double s = delta(i - 1, a) + ps(i, params.pair_index(a, y));
        if (s > best) {
          best = s;
          best_a = static_cast<int>(a);
        }
      }
      delta(i, y) = best;
      back(i, y) = best_a;
    }
  }
  int best_y = 0;
  double best =
      delta(n - 1, 0) + params.b.value(params.pair_index(0, params.stop()));
  for (Index y = 1; y < L; ++y) {
    double s =
        delta(n - 1, y) + params.b.value(params.pair_index(y, params.stop()));
    if (s > best) {
      best = s;
      best_y = static_cast<int>(y);
    }
  }
  std::vector<int> out(n);
  out[n - 1] = best_y;
  for (Index i = n - 1; i >= 1; --i) out[i - 1] = back(i, out[i]);
  return out;
}

}  // namespace sst
