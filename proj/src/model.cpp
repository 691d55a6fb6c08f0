#include "sst/model.hpp"

#include <stdexcept>

namespace sst {

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "slstm") return EncoderKind::SLstm;
  if (s == "bilstm") return EncoderKind::BiLstm;
  throw std::invalid_argument("unknown encoder '" + s +
                              "' (expected slstm or bilstm)");
}

HeadKind head_from_string(const std::string& s) {
  if (s == "softmax") return HeadKind::Softmax;
  if (s == "attn") return HeadKind::Attention;
  if (s == "crf") return HeadKind::Crf;
  throw std::invalid_argument("unknown head '" + s +
                              "' (expected softmax, attn or crf)");
}

std::string to_string(EncoderKind k) {
  return k == EncoderKind::SLstm ? "slstm" : "bilstm";
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Softmax:
      return "softmax";
    case HeadKind::Attention:
      return "attn";
    default:
      return "crf";
  }
}

Model Model::create(const ModelConfig& cfg, Tensor embedding_init) {
  Model m{cfg, Parameter("emb.table", std::move(embedding_init)),
          std::nullopt, {}, std::nullopt, std::nullopt, std::nullopt};
  if (m.embeddings.value.cols() != cfg.emb_dim) {
    throw std::invalid_argument("embedding table width " +
                                std::to_string(m.embeddings.value.cols()) +
                                " does not match configured dim " +
                                std::to_string(cfg.emb_dim));
  }
  if (cfg.encoder == EncoderKind::SLstm) {
    SLstmConfig sc;
    sc.hidden = cfg.hidden;
    sc.steps = cfg.steps;
    sc.window = cfg.window;
    sc.sentence_nodes = cfg.nodes;
    sc.input_size = cfg.emb_dim;
    m.slstm = SLstmParams::create(sc, cfg.seed + 11);
  } else {
    for (int l = 0; l < cfg.layers; ++l) {
      Index in = l == 0 ? cfg.emb_dim : 2 * cfg.hidden;
      m.bilstm.push_back(BiLstmParams::create(
          cfg.hidden, in, cfg.seed + 31 + 2 * l,
          "bilstm" + std::to_string(l)));
    }
  }
  Index width = m.encoder_width();
  switch (cfg.head) {
    case HeadKind::Softmax:
      m.clf = ClassifierParams::create(cfg.n_classes, width, cfg.seed + 71);
      break;
    case HeadKind::Attention: {
      Index a = cfg.attn_size > 0 ? cfg.attn_size : cfg.hidden;
      m.attn = AttentionParams::create(a, width, cfg.seed + 73);
      m.clf = ClassifierParams::create(cfg.n_classes, width, cfg.seed + 71);
      break;
    }
    case HeadKind::Crf:
      m.crf = CrfParams::create(cfg.n_tags, width, cfg.seed + 77);
      break;
  }
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (cfg.fine_tune_embeddings) out.push_back(&embeddings);
  if (slstm) {
    for (Parameter* p : slstm->parameters()) out.push_back(p);
  }
  for (BiLstmParams& layer : bilstm) {
    for (Parameter* p : layer.parameters()) out.push_back(p);
  }
  if (attn) {
    for (Parameter* p : attn->parameters()) out.push_back(p);
  }
  if (clf) {
    for (Parameter* p : clf->parameters()) out.push_back(p);
  }
  if (crf) {
    for (Parameter* p : crf->parameters()) out.push_back(p);
  }
  return out;
}

ad::Var Model::traced_embed(ad::Tape& tape, std::span<const int> tokens,
                            const Tensor* emb_mask) {
  ad::Var table = cfg.fine_tune_embeddings
                      ? tape.param(embeddings)
                      : tape.constant(embeddings.value);
  ad::Var x = ad::gather_rows(
      table, std::vector<int>(tokens.begin(), tokens.end()));
  if (emb_mask != nullptr) {
    x = ad::mul(x, tape.constant(*emb_mask));
  }
  return x;
}

TracedEncoded Model::traced_encode(ad::Tape& tape, ad::Var x,
                                   std::span<const Tensor> inter_masks) {
  if (cfg.encoder == EncoderKind::SLstm) {
    return encode_traced(tape, x, *slstm);
  }
  TracedBiEncoded enc = stack_encode_traced(tape, x, bilstm, inter_masks);
  return TracedEncoded{enc.word_h, enc.g};
}

Encoded Model::value_encode(std::span<const int> tokens, int workers) {
  if (cfg.encoder == EncoderKind::SLstm && workers > 1) {
    // Parallel per-token path.
    Tensor x = gather_rows(embeddings.value,
                           std::vector<int>(tokens.begin(), tokens.end()));
    return encode(x, *slstm, slstm->cfg, workers);
  }
  // Single-worker inference reuses the whole-sentence matrix formulation;
  // it computes the same values as the per-token path.
  ad::Tape tape;
  ad::Var x = traced_embed(tape, tokens, nullptr);
  TracedEncoded enc = traced_encode(tape, x, {});
  return Encoded{enc.word_h.value(), enc.g.value()};
}

ad::Var Model::classification_loss(ad::Tape& tape,
                                   const data::ClassificationExample& ex,
                                   const Tensor* emb_mask,
                                   const Tensor* head_mask,
                                   std::span<const Tensor> inter_masks) {
  if (!clf) throw std::runtime_error("model has no classification head");
  ad::Var x = traced_embed(tape, ex.tokens, emb_mask);
  TracedEncoded enc = traced_encode(tape, x, inter_masks);
  ad::Var g;
  if (cfg.head == HeadKind::Attention) {
    ad::Var word_h = enc.word_h;
    if (head_mask != nullptr)
      word_h = ad::mul(word_h, tape.constant(*head_mask));
    g = attend_traced(tape, word_h, *attn);
  } else {
    g = enc.g;
    if (head_mask != nullptr) {
      g = ad::mul(g, tape.constant(Tensor(head_mask->mat().row(0).transpose(),
                                          1)));
    }
  }
  return classify_nll_traced(tape, g, *clf, ex.label);
}

ad::Var Model::tagging_loss(ad::Tape& tape, const data::TaggingExample& ex,
                            const Tensor* emb_mask,
                            const Tensor* head_mask,
                            std::span<const Tensor> inter_masks) {
  if (!crf) throw std::runtime_error("model has no crf head");
  ad::Var x = traced_embed(tape, ex.tokens, emb_mask);
  TracedEncoded enc = traced_encode(tape, x, inter_masks);
  ad::Var word_h = enc.word_h;
  if (head_mask != nullptr)
    word_h = ad::mul(word_h, tape.constant(*head_mask));
  Index n = word_h.value().rows() - 2;
  ad::Var inner = ad::slice_rows(word_h, 1, n);
  return crf_nll_traced(tape, inner, *crf, ex.tags);
}

int Model::predict_class(std::span<const int> tokens, int workers) {
  if (!clf) throw std::runtime_error("model has no classification head");
  Encoded enc = value_encode(tokens, workers);
  Tensor g = cfg.head == HeadKind::Attention ? attend(enc.word_h, *attn)
                                             : enc.g;
  Tensor probs = classify(g, *clf);
  Index best = 0;
  for (Index k = 1; k < probs.rows(); ++k) {
    if (probs(k) > probs(best)) best = k;
  }
  return static_cast<int>(best);
}

std::vector<int> Model::predict_tags(std::span<const int> tokens,
                                     int workers) {
  if (!crf) throw std::runtime_error("model has no crf head");
  Encoded enc = value_encode(tokens, workers);
  Tensor inner = slice_rows(enc.word_h, 1, enc.word_h.rows() - 2);
  return crf_decode(inner, *crf);
}

std::vector<SweepResult> gradcheck_sweep(double eps, double tol) {
  std::vector<SweepResult> results;
  std::mt19937_64 rng(20240406);

  auto run_case = [&](const std::string& name, EncoderKind enc, HeadKind head,
                      int window, int nodes, int layers) {
    ModelConfig mc;
    mc.encoder = enc;
    mc.head = head;
    mc.hidden = 4;
    mc.emb_dim = 3;
    mc.steps = 3;
    mc.window = window;
    mc.nodes = nodes;
    mc.layers = layers;
    mc.n_classes = 3;
    mc.n_tags = 3;
    mc.seed = 977 + results.size();
    Tensor table = uniform(9, mc.emb_dim, 2, -0.5, 0.5, rng);
    Model model = Model::create(mc, std::move(table));

    // One fixed sentence of length 5 (plus boundaries).
    data::ClassificationExample cls;
    cls.tokens = {2, 4, 5, 6, 7, 8, 3};
    cls.label = 1;
    data::TaggingExample tag;
    tag.tokens = cls.tokens;
    tag.tags = {0, 2, 1, 0, 2};

    auto f = [&](bool with_grad) {
      ad::Tape tape;
      ad::Var loss = head == HeadKind::Crf
                         ? model.tagging_loss(tape, tag)
                         : model.classification_loss(tape, cls);
      // Scaled so finite-difference rounding noise on coordinates below the
      // 1e-8 relative-error floor stays under the tolerance; relative errors
      // of wrong adjoints are scale-invariant above the floor.
      loss = ad::scale_const(loss, 0.01);
      if (with_grad) tape.backward(loss);
      return loss.value().value();
    };
    std::vector<Parameter*> params = model.parameters();
    results.push_back({name, ad::grad_check(params, f, eps, tol)});
  };

  for (int w : {1, 2}) {
    for (int m : {0, 1, 2}) {
      run_case("slstm w" + std::to_string(w) + " m" + std::to_string(m) +
                   " softmax",
               EncoderKind::SLstm, HeadKind::Softmax, w, m, 1);
    }
  }
  run_case("bilstm 1-layer softmax", EncoderKind::BiLstm, HeadKind::Softmax,
           1, 1, 1);
  run_case("bilstm 2-layer softmax", EncoderKind::BiLstm, HeadKind::Softmax,
           1, 1, 2);
  run_case("slstm w1 m1 attn", EncoderKind::SLstm, HeadKind::Attention, 1, 1,
           1);
  run_case("bilstm 1-layer attn", EncoderKind::BiLstm, HeadKind::Attention, 1,
           1, 1);
  run_case("slstm w1 m1 crf", EncoderKind::SLstm, HeadKind::Crf, 1, 1, 1);
  run_case("bilstm 1-layer crf", EncoderKind::BiLstm, HeadKind::Crf, 1, 1, 1);
  return results;
}

}  // namespace sst
