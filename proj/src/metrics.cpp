#include "sst/metrics.hpp"

#include <set>
#include <stdexcept>
#include <tuple>

namespace sst::metrics {

namespace {

std::pair<char, std::string> split_tag(const std::string& tag) {
  if (tag == "O" || tag.empty()) return {'O', ""};
  size_t dash = tag.find('-');
  if (dash == std::string::npos) return {tag[0], ""};
  return {tag[0], tag.substr(dash + 1)};
}

}  // namespace

std::vector<Span> extract_spans(std::span<const std::string> tags) {
  std::vector<Span> out;
  int open_start = -1;
  std::string open_type;
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    auto [kind, type] = split_tag(tags[i]);
    switch (kind) {
      case 'S':
        open_start = -1;
        out.push_back({i, i, type});
        break;
      case 'B':
        open_start = i;
        open_type = type;
        break;
      case 'I':
        if (open_start < 0 || open_type != type) {
          open_start = i;
          open_type = type;
        }
        break;
      case 'E':
        if (open_start >= 0 && open_type == type) {
          out.push_back({open_start, i, type});
        } else {
          out.push_back({i, i, type});
        }
        open_start = -1;
        break;
      default:  // O
        open_start = -1;
        break;
    }
  }
  return out;
}

PRF span_prf(const std::vector<std::vector<std::string>>& gold,
             const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("span_prf: sequence count mismatch");
  }
  PRF out;
  for (size_t s = 0; s < gold.size(); ++s) {
    std::vector<Span> g = extract_spans(gold[s]);
    std::vector<Span> p = extract_spans(pred[s]);
    out.gold += static_cast<int>(g.size());
    out.predicted += static_cast<int>(p.size());
    std::set<std::tuple<int, int, std::string>> gset;
    for (const Span& sp : g) gset.emplace(sp.start, sp.end, sp.type);
    for (const Span& sp : p) {
      if (gset.count({sp.start, sp.end, sp.type})) ++out.correct;
    }
  }
  out.precision = out.predicted ? 100.0 * out.correct / out.predicted : 0.0;
  out.recall = out.gold ? 100.0 * out.correct / out.gold : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall /
                     (out.precision + out.recall)
               : 0.0;
  return out;
}

double token_accuracy(const std::vector<std::vector<int>>& gold,
                      const std::vector<std::vector<int>>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("token_accuracy: sequence count mismatch");
  }
  long total = 0, correct = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw std::invalid_argument("token_accuracy: length mismatch");
    }
    for (size_t i = 0; i < gold[s].size(); ++i) {
      ++total;
      if (gold[s][i] == pred[s][i]) ++correct;
    }
  }
  return total ? 100.0 * correct / total : 0.0;
}

}  // namespace sst::metrics
