#include "doctest.h"

#include "sst/bench.hpp"
#include "sst/metrics.hpp"

#include <sstream>

using namespace sst;

namespace {

std::vector<std::string> tags_of(std::initializer_list<const char*> xs) {
  return {xs.begin(), xs.end()};
}

}  // namespace

TEST_SUITE_BEGIN("cli_lib");

TEST_CASE("span extraction on BIOES sequences") {
  auto spans = metrics::extract_spans(
      tags_of({"O", "B-PER", "E-PER", "S-LOC", "O"}));
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == metrics::Span{1, 2, "PER"});
  CHECK(spans[1] == metrics::Span{3, 3, "LOC"});
  // Unterminated span is not counted.
  CHECK(metrics::extract_spans(tags_of({"B-PER", "I-PER"})).empty());
}

TEST_CASE("perfect predictions score F1 = 100") {
  std::vector<std::vector<std::string>> gold{
      tags_of({"B-PER", "E-PER", "O"}), tags_of({"S-LOC"})};
  metrics::PRF prf = metrics::span_prf(gold, gold);
  CHECK(prf.f1 == doctest::Approx(100.0));
  CHECK(prf.precision == doctest::Approx(100.0));
  CHECK(prf.recall == doctest::Approx(100.0));
}

TEST_CASE("all-O predictions score F1 = 0 when spans exist") {
  std::vector<std::vector<std::string>> gold{tags_of({"S-PER", "O", "O"})};
  std::vector<std::vector<std::string>> pred{tags_of({"O", "O", "O"})};
  metrics::PRF prf = metrics::span_prf(gold, pred);
  CHECK(prf.f1 == 0.0);
}

TEST_CASE("one of two spans correct gives P = R = F1 = 50") {
  std::vector<std::vector<std::string>> gold{
      tags_of({"B-PER", "E-PER", "O", "S-LOC"})};
  std::vector<std::vector<std::string>> pred{
      tags_of({"B-PER", "E-PER", "S-ORG", "O"})};
  metrics::PRF prf = metrics::span_prf(gold, pred);
  CHECK(prf.precision == doctest::Approx(50.0));
  CHECK(prf.recall == doctest::Approx(50.0));
  CHECK(prf.f1 == doctest::Approx(50.0));
}

TEST_CASE("token accuracy") {
  std::vector<std::vector<int>> gold{{1, 2, 3}, {0}};
  std::vector<std::vector<int>> pred{{1, 0, 3}, {0}};
  CHECK(metrics::token_accuracy(gold, pred) == doctest::Approx(75.0));
}

TEST_CASE("bench CSV schema is stable") {
  BenchConfig cfg;
  cfg.lengths = {4, 8};
  cfg.workers = {1, 2};
  cfg.steps = 2;
  cfg.hidden = 4;
  cfg.reps = 1;
  std::vector<BenchRow> rows = run_bench(cfg);
  CHECK(rows.size() == 2u * 2u * 2u);  // encoders x lengths x workers
  std::string csv = bench_csv(rows);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "encoder,length,workers,steps,sec_per_token,speedup");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == static_cast<int>(rows.size()));
  for (const BenchRow& r : rows) CHECK(r.sec_per_token > 0.0);
}

TEST_SUITE_END();
