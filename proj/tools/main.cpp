#include "CLI11.hpp"
#include "json.hpp"

#include "sst/bench.hpp"
#include "sst/checkpoint.hpp"
#include "sst/data.hpp"
#include "sst/metrics.hpp"
#include "sst/model.hpp"
#include "sst/train.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::ordered_json;

constexpr const char* kBuildId = "sst-0.1.0";

// Flat key=value config support: keys become --key arguments appended after
// the real command line, so explicit flags always win (duplicates are
// dropped here rather than rejected by the parser).
std::vector<std::string> apply_config_file(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config file line is not key=value: " + line);
    }
    std::string flag = "--" + line.substr(0, eq);
    bool given = false;
    for (const std::string& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    }
    if (given) continue;
    args.push_back(flag);
    args.push_back(line.substr(eq + 1));
  }
  return args;
}

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct DataOptions {
  std::string format = "tsv";  // tsv | conll | synth-cls | synth-tag
  std::string train_path, dev_path, test_path;
  std::string emb_path;
  sst::Index emb_dim = 300;
  int tag_column = 1;
  bool bioes = false;
  int synth_train = 10000;
  int synth_dev = 1000;
  int max_len = 64;
};

void add_data_flags(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.format,
                  "dataset format: tsv, conll, synth-cls, synth-tag");
  cmd->add_option("--train", d.train_path, "training file");
  cmd->add_option("--dev", d.dev_path, "development file");
  cmd->add_option("--test", d.test_path, "test file");
  cmd->add_option("--emb", d.emb_path, "pretrained embedding text file");
  cmd->add_option("--emb-dim", d.emb_dim, "embedding dimension");
  cmd->add_option("--tag-column", d.tag_column, "CoNLL tag column");
  cmd->add_flag("--bioes", d.bioes, "convert BIO tags to BIOES on load");
  cmd->add_option("--synth-train", d.synth_train, "synthetic train size");
  cmd->add_option("--synth-dev", d.synth_dev, "synthetic dev size");
  cmd->add_option("--max-len", d.max_len, "synthetic max sentence length");
}

struct LoadedData {
  sst::data::Vocab vocab;
  sst::Tensor emb_table;  // empty rows() == 0 when built from data
  sst::Dataset train, dev, test;
  bool tagging = false;
};

sst::Dataset load_tagging_file(const std::string& path, sst::data::Vocab& v,
                               const DataOptions& d, bool grow) {
  sst::data::TaggingData td =
      sst::data::load_conll(path, v, d.tag_column, grow);
  if (d.bioes) {
    // Convert per-sentence string tags; ids are re-assigned afterwards.
    std::vector<std::string>& names = td.tag_names;
    std::unordered_map<std::string, int> ids;
    std::vector<std::string> new_names;
    for (auto& ex : td.examples) {
      std::vector<std::string> tags;
      tags.reserve(ex.tags.size());
      for (int t : ex.tags) tags.push_back(names[t]);
      auto res = sst::data::bio_to_bioes(tags);
      for (size_t i = 0; i < res.tags.size(); ++i) {
        auto [it, inserted] =
            ids.emplace(res.tags[i], static_cast<int>(new_names.size()));
        if (inserted) new_names.push_back(res.tags[i]);
        ex.tags[i] = it->second;
      }
    }
    td.tag_names = std::move(new_names);
  }
  return sst::Dataset::tagging_of(std::move(td));
}

LoadedData load_data(const DataOptions& d, uint64_t seed, bool tagging_head) {
  LoadedData out;
  bool pretrained = !d.emb_path.empty();
  if (pretrained) {
    sst::data::Embeddings emb =
        sst::data::load_embeddings(d.emb_path, d.emb_dim, seed);
    out.vocab = std::move(emb.vocab);
    out.emb_table = std::move(emb.table);
  }
  bool grow = !pretrained;

  if (d.format == "synth-cls") {
    sst::data::SynthConfig sc{d.synth_train, d.max_len, seed};
    out.train = sst::Dataset::classification(
        sst::data::synth_classification(sc, out.vocab));
    sc.n_examples = d.synth_dev;
    sc.seed = seed + 1;
    out.dev = sst::Dataset::classification(
        sst::data::synth_classification(sc, out.vocab));
    sc.seed = seed + 2;
    out.test = sst::Dataset::classification(
        sst::data::synth_classification(sc, out.vocab));
    out.tagging = false;
  } else if (d.format == "synth-tag") {
    sst::data::SynthConfig sc{d.synth_train, d.max_len, seed};
    out.train =
        sst::Dataset::tagging_of(sst::data::synth_tagging(sc, out.vocab));
    sc.n_examples = d.synth_dev;
    sc.seed = seed + 1;
    out.dev =
        sst::Dataset::tagging_of(sst::data::synth_tagging(sc, out.vocab));
    sc.seed = seed + 2;
    out.test =
        sst::Dataset::tagging_of(sst::data::synth_tagging(sc, out.vocab));
    out.tagging = true;
  } else if (d.format == "conll") {
    if (!d.train_path.empty())
      out.train = load_tagging_file(d.train_path, out.vocab, d, grow);
    if (!d.dev_path.empty())
      out.dev = load_tagging_file(d.dev_path, out.vocab, d, false);
    if (!d.test_path.empty())
      out.test = load_tagging_file(d.test_path, out.vocab, d, false);
    out.tagging = true;
  } else if (d.format == "tsv") {
    if (!d.train_path.empty())
      out.train = sst::Dataset::classification(
          sst::data::load_classification_tsv(d.train_path, out.vocab, grow));
    if (!d.dev_path.empty())
      out.dev = sst::Dataset::classification(
          sst::data::load_classification_tsv(d.dev_path, out.vocab, false));
    if (!d.test_path.empty())
      out.test = sst::Dataset::classification(
          sst::data::load_classification_tsv(d.test_path, out.vocab, false));
    out.tagging = false;
  } else {
    throw CLI::ValidationError("--data", "unknown format '" + d.format + "'");
  }
  if (out.tagging != tagging_head) {
    throw CLI::ValidationError(
        "--head", tagging_head ? "crf head needs a tagging dataset"
                               : "classification heads need a "
                                 "classification dataset");
  }
  if (!pretrained) {
    std::mt19937_64 rng(seed + 17);
    out.emb_table = sst::uniform(static_cast<sst::Index>(out.vocab.size()),
                                 d.emb_dim, 2, -0.05, 0.05, rng);
  }
  return out;
}

// Dev/test tag sequences compared as strings for span scoring.
std::vector<std::vector<std::string>> tag_strings(
    const sst::Dataset& ds, const std::vector<std::vector<int>>& ids) {
  std::vector<std::vector<std::string>> out;
  out.reserve(ids.size());
  for (const auto& seq : ids) {
    std::vector<std::string> s;
    s.reserve(seq.size());
    for (int t : seq) s.push_back(ds.label_names[t]);
    out.push_back(std::move(s));
  }
  return out;
}

bool labels_look_bioes(const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    if (n == "O" || (n.size() > 1 && n[1] == '-')) return true;
  }
  return false;
}

int cmd_train(const DataOptions& dopt, sst::ModelConfig mc,
              sst::TrainConfig tc, const std::string& out_path,
              double stop_at, bool json_out) {
  std::string started = iso_now();
  auto data = load_data(dopt, tc.seed, mc.head == sst::HeadKind::Crf);
  if (data.train.size() == 0) {
    std::cerr << "error: no training data\n";
    return 2;
  }
  mc.emb_dim = data.emb_table.cols();
  if (data.tagging) {
    mc.n_tags = static_cast<sst::Index>(data.train.label_names.size());
  } else {
    mc.n_classes = static_cast<sst::Index>(data.train.label_names.size());
  }
  sst::Model model = sst::Model::create(mc, data.emb_table);
  sst::AdamState adam;
  ordered_json epochs_json = ordered_json::array();

  double best = -1.0;
  for (int e = 0; e < tc.epochs; ++e) {
    sst::EpochResult r = sst::train_epoch(model, data.train, tc, adam, e);
    double dev = data.dev.size()
                     ? sst::evaluate(model, data.dev, tc.workers)
                     : 0.0;
    std::printf("epoch %d  train_loss %.6f  dev %.2f  seconds %.1f\n", e + 1,
                r.train_loss, dev, r.seconds);
    std::fflush(stdout);
    if (json_out) {
      ordered_json j{{"epoch", e + 1},
                     {"train_loss", r.train_loss},
                     {"dev_metric", dev},
                     {"seconds", r.seconds},
                     {"skipped_batches", r.skipped_batches}};
      std::cout << j.dump() << "\n";
    }
    epochs_json.push_back(ordered_json{{"epoch", e + 1},
                                       {"train_loss", r.train_loss},
                                       {"dev_metric", dev}});
    if (dev > best) {
      best = dev;
      sst::Checkpoint ckpt =
          sst::Checkpoint::capture(model, tc, adam, e + 1, data.vocab.hash(),
                                   best, data.train.label_names);
      sst::save_checkpoint(out_path, ckpt);
    }
    if (stop_at > 0.0 && dev >= stop_at) break;
  }

  ordered_json manifest{
      {"command", "train"},
      {"build", kBuildId},
      {"seed", tc.seed},
      {"config",
       ordered_json{{"encoder", to_string(mc.encoder)},
                    {"head", to_string(mc.head)},
                    {"hidden", mc.hidden},
                    {"steps", mc.steps},
                    {"window", mc.window},
                    {"nodes", mc.nodes},
                    {"layers", mc.layers},
                    {"emb_dim", mc.emb_dim},
                    {"lr", tc.lr},
                    {"lr_decay", tc.lr_decay},
                    {"clip", tc.clip_norm},
                    {"batch", tc.batch_size},
                    {"l2", tc.l2},
                    {"dropout", tc.dropout},
                    {"epochs", tc.epochs},
                    {"workers", tc.workers},
                    {"data", dopt.format},
                    {"max_len", dopt.max_len}}},
      {"best_dev", best},
      {"epoch_rows", epochs_json},
      {"started_at", started},
      {"ended_at", iso_now()}};
  std::ofstream mf(out_path + ".manifest.json");
  mf << manifest.dump(2) << "\n";
  std::printf("best dev %.2f; checkpoint %s\n", best, out_path.c_str());
  return 0;
}

int cmd_eval(const DataOptions& dopt, const std::string& ckpt_path,
             int workers, bool json_out) {
  sst::Checkpoint ckpt = sst::load_checkpoint(ckpt_path);
  auto data =
      load_data(dopt, ckpt.train_cfg.seed, ckpt.model_cfg.head ==
                                               sst::HeadKind::Crf);
  if (ckpt.vocab_hash != data.vocab.hash()) {
    std::cerr << "error: vocabulary mismatch between checkpoint and data "
                 "(version error)\n";
    return 3;
  }
  sst::Model model = ckpt.restore_model();
  const sst::Dataset& ds = data.test.size() ? data.test : data.dev;
  ordered_json j{{"command", "eval"}, {"build", kBuildId}};
  if (ds.tagging) {
    std::vector<std::vector<int>> pred =
        sst::predict_all_tags(model, ds, workers);
    std::vector<std::vector<int>> gold;
    gold.reserve(ds.tag.size());
    for (const auto& ex : ds.tag) gold.push_back(ex.tags);
    double acc = sst::metrics::token_accuracy(gold, pred);
    std::printf("token accuracy %.2f\n", acc);
    j["token_accuracy"] = acc;
    if (labels_look_bioes(ds.label_names)) {
      sst::metrics::PRF prf =
          sst::metrics::span_prf(tag_strings(ds, gold), tag_strings(ds, pred));
      std::printf("span P %.2f  R %.2f  F1 %.2f\n", prf.precision, prf.recall,
                  prf.f1);
      j["span_p"] = prf.precision;
      j["span_r"] = prf.recall;
      j["span_f1"] = prf.f1;
    }
  } else {
    double acc = sst::evaluate(model, ds, workers);
    std::printf("accuracy %.2f\n", acc);
    j["accuracy"] = acc;
  }
  if (json_out) std::cout << j.dump() << "\n";
  return 0;
}

int cmd_gradcheck(double eps, double tol) {
  std::vector<sst::SweepResult> results = sst::gradcheck_sweep(eps, tol);
  bool ok = true;
  for (const sst::SweepResult& r : results) {
    std::printf("%-28s worst %.3e (%s)\n", r.variant.c_str(),
                r.report.worst_rel_err, r.report.worst_param.c_str());
    if (!r.report.pass(tol)) {
      ok = false;
      for (const auto& e : r.report.entries) {
        if (e.max_rel_err >= tol) {
          std::printf("  FAIL %-24s rel %.3e at coord %lld (analytic %.6e, "
                      "numeric %.6e)\n",
                      e.param.c_str(), e.max_rel_err,
                      static_cast<long long>(e.worst_coord), e.analytic,
                      e.numeric);
        }
      }
    }
  }
  std::printf("%s\n", ok ? "gradcheck: all variants passed" :
                           "gradcheck: FAILURES above");
  return ok ? 0 : 1;
}

int cmd_bench(const sst::BenchConfig& bc, const std::string& out_path) {
  std::vector<sst::BenchRow> rows = sst::run_bench(bc);
  std::string csv = sst::bench_csv(rows);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path);
    out << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sentence-state LSTM toolkit"};
  app.require_subcommand(1);

  DataOptions dopt;
  sst::ModelConfig mc;
  sst::TrainConfig tc;
  std::string encoder = "slstm", head = "softmax";
  std::string out_path = "model.ckpt";
  std::string ckpt_path;
  double stop_at = 0.0;
  bool json_out = false;

  std::string config_path;

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path,
                    "flat key=value config file; flags override");
  add_data_flags(train, dopt);
  train->add_option("--encoder", encoder, "slstm or bilstm");
  train->add_option("--head", head, "softmax, attn or crf");
  train->add_option("--steps", mc.steps, "recurrent steps");
  train->add_option("--window", mc.window, "context window per side");
  train->add_option("--nodes", mc.nodes, "sentence-level nodes");
  train->add_option("--hidden", mc.hidden, "hidden size");
  train->add_option("--layers", mc.layers, "stacked BiLSTM layers");
  train->add_option("--attn-dim", mc.attn_size, "attention size");
  train->add_option("--lr", tc.lr, "learning rate");
  train->add_option("--lr-decay", tc.lr_decay, "per-epoch decay");
  train->add_option("--clip", tc.clip_norm, "gradient clipping norm");
  train->add_option("--batch", tc.batch_size, "batch size");
  train->add_option("--l2", tc.l2, "L2 coefficient");
  train->add_option("--dropout", tc.dropout, "embedding dropout rate");
  train->add_option("--epochs", tc.epochs, "training epochs");
  train->add_option("--seed", tc.seed, "run seed");
  train->add_option("--workers", tc.workers, "parallel workers");
  train->add_option("--out", out_path, "checkpoint output path");
  train->add_option("--stop-at", stop_at, "stop when dev metric reached");
  train->add_flag("--json", json_out, "machine-readable epoch lines");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_data_flags(eval, dopt);
  int eval_workers = 1;
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--workers", eval_workers, "parallel workers");
  eval->add_flag("--json", json_out, "machine-readable result");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  double gc_eps = 1e-5, gc_tol = 1e-4;
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "relative error tolerance");

  CLI::App* bench =
      app.add_subcommand("bench", "forward-speed benchmark (CSV)");
  sst::BenchConfig bc;
  std::string bench_out;
  bench->add_option("--lengths", bc.lengths, "sentence lengths");
  bench->add_option("--workers", bc.workers, "worker counts");
  bench->add_option("--steps", bc.steps, "recurrent steps");
  bench->add_option("--hidden", bc.hidden, "hidden size");
  bench->add_option("--reps", bc.reps, "timed repetitions");
  bench->add_option("--seed", bc.seed, "seed");
  bench->add_option("--out", bench_out, "CSV output path (default stdout)");

  std::vector<std::string> args;
  try {
    args = apply_config_file(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<const char*> argp;
  for (const std::string& a : args) argp.push_back(a.c_str());
  CLI11_PARSE(app, static_cast<int>(argp.size()),
              const_cast<char**>(argp.data()));

  try {
    if (train->parsed()) {
      mc.encoder = sst::encoder_from_string(encoder);
      mc.head = sst::head_from_string(head);
      mc.seed = tc.seed;
      return cmd_train(dopt, mc, tc, out_path, stop_at, json_out);
    }
    if (eval->parsed()) {
      return cmd_eval(dopt, ckpt_path, eval_workers, json_out);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_eps, gc_tol);
    }
    if (bench->parsed()) {
      return cmd_bench(bc, bench_out);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
