#include "sst/bench.hpp"

#include "sst/bilstm.hpp"
#include "sst/slstm.hpp"

#include <chrono>
#include <sstream>

namespace sst {

namespace {

double time_reps(int reps, const std::function<void()>& fn) {
  fn();  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  Index d = cfg.hidden;

  SLstmConfig sc;
  sc.hidden = d;
  sc.steps = cfg.steps;
  sc.window = 1;
  sc.sentence_nodes = 1;
  sc.input_size = d;
  SLstmParams sparams = SLstmParams::create(sc, cfg.seed + 1);
  BiLstmParams bparams = BiLstmParams::create(d, d, cfg.seed + 2);

  std::vector<BenchRow> rows;
  for (int length : cfg.lengths) {
    Tensor emb = uniform(length + 2, d, 2, -0.5, 0.5, rng);
    double base_slstm = 0.0;
    double base_bilstm = 0.0;
    for (int w : cfg.workers) {
      double sec = time_reps(cfg.reps, [&] { encode(emb, sparams, sc, w); });
      BenchRow row{"slstm", length, w, cfg.steps, sec / length, 1.0};
      if (w == cfg.workers.front()) base_slstm = row.sec_per_token;
      row.speedup = base_slstm / row.sec_per_token;
      rows.push_back(row);
    }
    for (int w : cfg.workers) {
      // The scan is inherently sequential; workers only apply across batch
      // items, so a single sentence sees no intra-sentence parallelism.
      double sec = time_reps(cfg.reps, [&] { bilstm_encode(emb, bparams); });
      BenchRow row{"bilstm", length, w, cfg.steps, sec / length, 1.0};
      if (w == cfg.workers.front()) base_bilstm = row.sec_per_token;
      row.speedup = base_bilstm / row.sec_per_token;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "encoder,length,workers,steps,sec_per_token,speedup\n";
  for (const BenchRow& r : rows) {
    out << r.encoder << ',' << r.length << ',' << r.workers << ','
        << r.steps << ',' << std::scientific << r.sec_per_token << ','
        << std::defaultfloat << r.speedup << '\n';
  }
  return out.str();
}

}  // namespace sst
