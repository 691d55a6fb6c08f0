#pragma once

#include "sst/tensor.hpp"

#include <string>
#include <vector>

namespace sst {

struct BenchRow {
  std::string encoder;
  int length = 0;
  int workers = 1;
  int steps = 0;
  double sec_per_token = 0.0;
  double speedup = 1.0;  // vs the 1-worker row of the same encoder/length
};

struct BenchConfig {
  std::vector<int> lengths = {16, 32, 64, 128, 256};
  std::vector<int> workers = {1, 2, 4};
  int steps = 9;
  Index hidden = 128;
  int reps = 3;
  uint64_t seed = 1;
};

/// Forward-only timing on synthetic inputs. S-LSTM rows split the per-token
/// state updates across workers inside each transition; BiLSTM scans are
/// sequential, so extra workers leave them untouched.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

/// CSV with the fixed header
/// "encoder,length,workers,steps,sec_per_token,speedup".
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace sst
