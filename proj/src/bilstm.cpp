#include "sst/bilstm.hpp"

#include <stdexcept>

namespace sst {

namespace {

constexpr const char* kGateNames[] = {"i", "f", "o", "u"};

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

LstmParams LstmParams::create(Index hidden, Index input, uint64_t seed,
                              const std::string& prefix) {
  std::mt19937_64 rng(seed);
  LstmParams p{hidden,
               input,
               {},
               {},
               {},
               Parameter(prefix + ".h_init", Tensor::vector(hidden)),
               Parameter(prefix + ".c_init", Tensor::vector(hidden))};
  for (int g = 0; g < 4; ++g) {
    p.w.emplace_back(prefix + "." + kGateNames[g] + ".w",
                     glorot(hidden, input, rng));
    p.u.emplace_back(prefix + "." + kGateNames[g] + ".u",
                     glorot(hidden, hidden, rng));
    p.b.emplace_back(prefix + "." + kGateNames[g] + ".b",
                     Tensor::vector(hidden));
  }
  return p;
}

std::vector<Parameter*> LstmParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : w) out.push_back(&p);
  for (auto& p : u) out.push_back(&p);
  for (auto& p : b) out.push_back(&p);
  out.push_back(&h_init);
  out.push_back(&c_init);
  return out;
}

BiLstmParams BiLstmParams::create(Index hidden, Index input, uint64_t seed,
                                  const std::string& prefix) {
  return BiLstmParams{
      LstmParams::create(hidden, input, seed, prefix + ".fwd"),
      LstmParams::create(hidden, input, seed + 1, prefix + ".bwd")};
}

std::vector<Parameter*> BiLstmParams::parameters() {
  std::vector<Parameter*> out = fwd.parameters();
  for (Parameter* p : bwd.parameters()) out.push_back(p);
  return out;
}

LstmGates lstm_gates(const Tensor& h_prev, const Tensor& x_t,
                     const LstmParams& params) {
  require(h_prev.rows() == params.hidden, "lstm_step: state size mismatch");
  require(x_t.rows() == params.input_size,
          "lstm_step: input size mismatch (" + std::to_string(x_t.rows()) +
              " vs " + std::to_string(params.input_size) + ")");
  Tensor pre[4];
  for (int g = 0; g < 4; ++g) {
    pre[g] = add(add(matmul(params.w[g].value, x_t),
                     matmul(params.u[g].value, h_prev)),
                 params.b[g].value);
  }
  Tensor i_hat = sigmoid(pre[0]);
  Tensor f_hat = sigmoid(pre[1]);
  std::vector<Tensor> norm =
      softmax_group(std::vector<Tensor>{i_hat, f_hat});
  return LstmGates{std::move(norm[0]), std::move(norm[1]), sigmoid(pre[2]),
                   tanh(pre[3])};
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& h_prev,
                                    const Tensor& c_prev, const Tensor& x_t,
                                    const LstmParams& params) {
  require(c_prev.rows() == params.hidden, "lstm_step: state size mismatch");
  LstmGates g = lstm_gates(h_prev, x_t, params);
  Tensor c = add(cwise_mul(c_prev, g.f), cwise_mul(g.u, g.i));
  Tensor h = cwise_mul(g.o, tanh(c));
  return {std::move(h), std::move(c)};
}

BiEncoded bilstm_encode(const Tensor& embeddings, const BiLstmParams& params) {
  Index rows = embeddings.rows();
  require(rows >= 2, "bilstm_encode: need at least the two boundary tokens");
  Index d = params.fwd.hidden;

  // Forward scan: positions 1..n+1; position 0 keeps the initial state.
  Mat fwd_h(rows, d);
  fwd_h.row(0) = params.fwd.h_init.value.mat().col(0).transpose();
  {
    Tensor h = params.fwd.h_init.value;
    Tensor c = params.fwd.c_init.value;
    for (Index t = 1; t < rows; ++t) {
      auto [h2, c2] = lstm_step(h, c, row(embeddings, t), params.fwd);
      h = std::move(h2);
      c = std::move(c2);
      fwd_h.row(t) = h.mat().col(0).transpose();
    }
  }

  // Backward scan: positions n..0; position n+1 keeps the initial state.
  Mat bwd_h(rows, d);
  bwd_h.row(rows - 1) = params.bwd.h_init.value.mat().col(0).transpose();
  {
    Tensor h = params.bwd.h_init.value;
    Tensor c = params.bwd.c_init.value;
    for (Index t = rows - 2; t >= 0; --t) {
      auto [h2, c2] = lstm_step(h, c, row(embeddings, t), params.bwd);
      h = std::move(h2);
      c = std::move(c2);
      bwd_h.row(t) = h.mat().col(0).transpose();
    }
  }

  BiEncoded out;
  out.word_h = Tensor::matrix(rows, 2 * d);
  out.word_h.mat().leftCols(d) = fwd_h;
  out.word_h.mat().rightCols(d) = bwd_h;
  out.g = Tensor::vector(2 * d);
  out.g.mat().topRows(d) = fwd_h.row(rows - 1).transpose();
  out.g.mat().bottomRows(d) = bwd_h.row(0).transpose();
  return out;
}

BiEncoded stack_encode(std::span<const BiLstmParams> layers,
                       const Tensor& embeddings) {
  require(!layers.empty(), "stack_encode: no layers");
  Tensor input = embeddings;
  BiEncoded enc;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].fwd.input_size != input.cols()) {
      throw std::invalid_argument(
          "stack_encode: layer " + std::to_string(l) + " expects input size " +
          std::to_string(layers[l].fwd.input_size) + ", got " +
          std::to_string(input.cols()));
    }
    enc = bilstm_encode(input, layers[l]);
    input = enc.word_h;
  }
  return enc;
}

namespace {

struct TracedDirection {
  std::vector<ad::Var> h;  // per position
  ad::Var last_h;
};

// Scans positions `from`..`to` (inclusive) with the given stride. The
// position before `from` keeps the initial state.
TracedDirection scan_traced(ad::Tape& tape, ad::Var x, LstmParams& p,
                            Index from, Index to, Index stride) {
  using namespace ad;
  Index rows = x.value().rows();
  std::vector<Var> wv, uv, bv;
  for (int g = 0; g < 4; ++g) {
    wv.push_back(tape.param(p.w[g]));
    uv.push_back(tape.param(p.u[g]));
    bv.push_back(tape.param(p.b[g]));
  }
  Var h = tape.param(p.h_init);
  Var c = tape.param(p.c_init);
  TracedDirection dir;
  dir.h.resize(rows);
  dir.h[from - stride] = h;
  for (Index t = from; t != to + stride; t += stride) {
    Var xt = row(x, t);
    Var i_hat = sigmoid(add(add(matmul(wv[0], xt), matmul(uv[0], h)), bv[0]));
    Var f_hat = sigmoid(add(add(matmul(wv[1], xt), matmul(uv[1], h)), bv[1]));
    Var o = sigmoid(add(add(matmul(wv[2], xt), matmul(uv[2], h)), bv[2]));
    Var u = tanh(add(add(matmul(wv[3], xt), matmul(uv[3], h)), bv[3]));
    std::vector<Var> norm = softmax_group(std::vector<Var>{i_hat, f_hat});
    std::vector<Var> a{c, u}, bvecs{norm[1], norm[0]};
    c = mul_sum(a, bvecs);
    h = gated_tanh(o, c);
    dir.h[t] = h;
  }
  dir.last_h = h;
  return dir;
}

}  // namespace

TracedBiEncoded bilstm_encode_traced(ad::Tape& tape, ad::Var x,
                                     BiLstmParams& params) {
  using namespace ad;
  Index rows = x.value().rows();
  TracedDirection f = scan_traced(tape, x, params.fwd, 1, rows - 1, 1);
  TracedDirection b = scan_traced(tape, x, params.bwd, rows - 2, 0, -1);
  std::vector<Var> rows_cat;
  for (Index t = 0; t < rows; ++t) {
    rows_cat.push_back(concat_rows(std::vector<Var>{f.h[t], b.h[t]}));
  }
  TracedBiEncoded out;
  out.word_h = stack_rows(rows_cat);
  out.g = concat_rows(std::vector<Var>{f.last_h, b.last_h});
  return out;
}

TracedBiEncoded stack_encode_traced(ad::Tape& tape, ad::Var x,
                                    std::span<BiLstmParams> layers,
                                    std::span<const Tensor> inter_dropout) {
  using namespace ad;
  Var input = x;
  TracedBiEncoded enc;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].fwd.input_size != input.value().cols()) {
      throw std::invalid_argument(
          "stack_encode: layer " + std::to_string(l) + " expects input size " +
          std::to_string(layers[l].fwd.input_size) + ", got " +
          std::to_string(input.value().cols()));
    }
    if (l > 0 && l - 1 < inter_dropout.size()) {
      input = mul(input, tape.constant(inter_dropout[l - 1]));
    }
    enc = bilstm_encode_traced(tape, input, layers[l]);
    input = enc.word_h;
  }
  return enc;
}

}  // namespace sst
