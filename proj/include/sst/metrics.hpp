#pragma once

#include <span>
#include <string>
#include <vector>

namespace sst::metrics {

struct Span {
  int start = 0;
  int end = 0;  // inclusive
  std::string type;

  bool operator==(const Span&) const = default;
};

/// Spans from BIOES tags. A span opens on B-X (or is S-X alone) and counts
/// only when closed by E-X of the same type; malformed runs are dropped,
/// except that a lone E-X or I-X opening tag is read as a fresh start.
std::vector<Span> extract_spans(std::span<const std::string> tags);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int gold = 0;
  int predicted = 0;
  int correct = 0;
};

/// Exact-boundary, exact-type span matching over parallel tag sequences.
PRF span_prf(const std::vector<std::vector<std::string>>& gold,
             const std::vector<std::vector<std::string>>& pred);

double token_accuracy(const std::vector<std::vector<int>>& gold,
                      const std::vector<std::vector<int>>& pred);

}  // namespace sst::metrics
