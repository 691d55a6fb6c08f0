#include "sst/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace sst::data {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool parse_double(const std::string& s, double& out) {
  size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace

Vocab::Vocab() {
  tokens_ = {"<pad>", "<unk>", "<s>", "</s>"};
  for (size_t i = 0; i < tokens_.size(); ++i)
    ids_.emplace(tokens_[i], static_cast<int>(i));
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) {
    throw std::invalid_argument("Vocab: id " + std::to_string(id) +
                                " out of range");
  }
  return tokens_[id];
}

uint64_t Vocab::hash() const {
  uint64_t h = 14695981039346656037ull;
  for (const std::string& t : tokens_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= '\n';
    h *= 1099511628211ull;
  }
  return h;
}

Embeddings load_embeddings(const std::string& path, Index dim, uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file " + path);
  Embeddings emb;
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols = split_ws(line);
    if (static_cast<Index>(cols.size()) != dim + 1) {
      throw ParseError(path, lineno,
                       "expected token + " + std::to_string(dim) +
                           " values, got " + std::to_string(cols.size()) +
                           " columns");
    }
    std::vector<double> v(dim);
    for (Index j = 0; j < dim; ++j) {
      if (!parse_double(cols[j + 1], v[j])) {
        throw ParseError(path, lineno, "bad float '" + cols[j + 1] + "'");
      }
    }
    emb.vocab.add(cols[0]);
    rows.push_back(std::move(v));
  }
  Index n = static_cast<Index>(rows.size());
  emb.table = Tensor::matrix(n + 4, dim);
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j) emb.table(i + 4, j) = rows[i][j];
    mean += emb.table.mat().row(i + 4);
  }
  if (n > 0) mean /= static_cast<double>(n);
  emb.table.mat().row(Vocab::kUnk) = mean;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (Index j = 0; j < dim; ++j) emb.table(Vocab::kBos, j) = dist(rng);
  for (Index j = 0; j < dim; ++j) emb.table(Vocab::kEos, j) = dist(rng);
  return emb;
}

ClassificationData load_classification_tsv(const std::string& path,
                                           Vocab& vocab, bool grow) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  ClassificationData data;
  std::unordered_map<std::string, int> label_ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path, lineno, "missing tab separator");
    }
    std::string label = line.substr(0, tab);
    auto [it, inserted] =
        label_ids.emplace(label, static_cast<int>(data.label_names.size()));
    if (inserted) data.label_names.push_back(label);
    ClassificationExample ex;
    ex.label = it->second;
    ex.tokens.push_back(Vocab::kBos);
    for (const std::string& tok : split_ws(lower(line.substr(tab + 1)))) {
      ex.tokens.push_back(grow ? vocab.add(tok) : vocab.id_of(tok));
    }
    ex.tokens.push_back(Vocab::kEos);
    data.examples.push_back(std::move(ex));
  }
  return data;
}

TaggingData load_conll(const std::string& path, Vocab& vocab, int tag_column,
                       bool grow) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  TaggingData data;
  std::unordered_map<std::string, int> tag_ids;
  std::vector<std::vector<std::string>> sentence;
  std::string line;
  size_t lineno = 0;
  size_t sentence_start = 0;

  auto flush = [&]() {
    if (sentence.empty()) return;
    if (sentence[0][0] == "-DOCSTART-") {
      sentence.clear();
      return;
    }
    size_t width = sentence[0].size();
    for (size_t r = 0; r < sentence.size(); ++r) {
      if (sentence[r].size() != width) {
        throw ParseError(path, sentence_start + r,
                         "ragged columns within a sentence (" +
                             std::to_string(sentence[r].size()) + " vs " +
                             std::to_string(width) + ")");
      }
    }
    if (tag_column < 0 || static_cast<size_t>(tag_column) >= width) {
      throw ParseError(path, sentence_start,
                       "tag column " + std::to_string(tag_column) +
                           " out of range for " + std::to_string(width) +
                           " columns");
    }
    TaggingExample ex;
    ex.tokens.push_back(Vocab::kBos);
    for (const auto& cols : sentence) {
      ex.tokens.push_back(grow ? vocab.add(cols[0]) : vocab.id_of(cols[0]));
      const std::string& tag = cols[tag_column];
      auto [it, inserted] =
          tag_ids.emplace(tag, static_cast<int>(data.tag_names.size()));
      if (inserted) data.tag_names.push_back(tag);
      ex.tags.push_back(it->second);
    }
    ex.tokens.push_back(Vocab::kEos);
    data.examples.push_back(std::move(ex));
    sentence.clear();
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (sentence.empty()) sentence_start = lineno;
    sentence.push_back(std::move(cols));
  }
  flush();
  return data;
}

namespace {

// "B-PER" -> {'B', "PER"}; "O" -> {'O', ""}.
std::pair<char, std::string> split_tag(const std::string& tag) {
  if (tag == "O" || tag.empty()) return {'O', ""};
  size_t dash = tag.find('-');
  if (dash == std::string::npos) return {tag[0], ""};
  return {tag[0], tag.substr(dash + 1)};
}

}  // namespace

BioesResult bio_to_bioes(std::span<const std::string> tags) {
  size_t n = tags.size();
  std::vector<std::string> bio(tags.begin(), tags.end());
  BioesResult out;
  // Repair orphan I-tags (no open span of the same type) as B.
  for (size_t i = 0; i < n; ++i) {
    auto [kind, type] = split_tag(bio[i]);
    if (kind != 'I') continue;
    bool open = false;
    if (i > 0) {
      auto [pk, pt] = split_tag(bio[i - 1]);
      open = (pk == 'B' || pk == 'I') && pt == type;
    }
    if (!open) {
      bio[i] = type.empty() ? "B" : "B-" + type;
      ++out.repairs;
    }
  }
  out.tags.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto [kind, type] = split_tag(bio[i]);
    if (kind == 'O') {
      out.tags[i] = "O";
      continue;
    }
    bool next_continues = false;
    if (i + 1 < n) {
      auto [nk, nt] = split_tag(bio[i + 1]);
      next_continues = nk == 'I' && nt == type;
    }
    std::string suffix = type.empty() ? "" : "-" + type;
    if (kind == 'B') {
      out.tags[i] = (next_continues ? "B" : "S") + suffix;
    } else {  // I
      out.tags[i] = (next_continues ? "I" : "E") + suffix;
    }
  }
  return out;
}

std::vector<std::string> bioes_to_bio(std::span<const std::string> tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const std::string& t : tags) {
    auto [kind, type] = split_tag(t);
    std::string suffix = type.empty() ? "" : "-" + type;
    if (kind == 'S')
      out.push_back("B" + suffix);
    else if (kind == 'E')
      out.push_back("I" + suffix);
    else
      out.push_back(t);
  }
  return out;
}

bool bioes_well_formed(std::span<const std::string> tags) {
  std::string open_type;
  bool open = false;
  for (const std::string& t : tags) {
    auto [kind, type] = split_tag(t);
    switch (kind) {
      case 'O':
      case 'S':
        if (open) return false;
        break;
      case 'B':
        if (open) return false;
        open = true;
        open_type = type;
        break;
      case 'I':
        if (!open || type != open_type) return false;
        break;
      case 'E':
        if (!open || type != open_type) return false;
        open = false;
        break;
      default:
        return false;
    }
  }
  return !open;
}

bool synth_classification_label(std::span<const std::string> tokens,
                                int max_len) {
  int gap_min = max_len / 2;
  int first_a = -1;
  for (size_t j = 0; j < tokens.size(); ++j) {
    if (tokens[j] == "A" && first_a < 0) first_a = static_cast<int>(j);
    if (tokens[j] == "B" && first_a >= 0 &&
        static_cast<int>(j) - first_a - 1 >= gap_min) {
      return true;
    }
  }
  return false;
}

ClassificationData synth_classification(const SynthConfig& cfg, Vocab& vocab) {
  if (cfg.max_len < 8)
    throw std::invalid_argument("synth_classification: max_len must be >= 8")
        ;
  std::mt19937_64 rng(cfg.seed);
  int gap_min = cfg.max_len / 2;
  int min_len = std::min(cfg.max_len, gap_min + 4);
  int mid_len = std::min(cfg.max_len, min_len + (cfg.max_len - min_len) / 3);

  std::vector<int> filler_ids;
  for (int k = 0; k < 20; ++k) filler_ids.push_back(vocab.add("t" + std::to_string(k)));
  int id_a = vocab.add("A");
  int id_b = vocab.add("B");

  ClassificationData data;
  data.label_names = {"0", "1"};
  // Lengths lean short with a tail up to max_len.
  std::uniform_int_distribution<int> len_short(min_len, mid_len);
  std::uniform_int_distribution<int> len_long(mid_len, cfg.max_len);
  std::uniform_int_distribution<int> len_pick(0, 3);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> neg_kind(0, 9);

  for (int e = 0; e < cfg.n_examples; ++e) {
    int len = len_pick(rng) == 0 ? len_long(rng) : len_short(rng);
    std::vector<int> toks(len);
    std::uniform_int_distribution<size_t> fill(0, filler_ids.size() - 1);
    for (int i = 0; i < len; ++i) toks[i] = filler_ids[fill(rng)];
    // Far positions, shared by positives and the repeated-marker negatives
    // so that marker placement alone carries no label signal.
    std::uniform_int_distribution<int> ai(0, len - gap_min - 2);
    int far_i = ai(rng);
    std::uniform_int_distribution<int> bj(far_i + gap_min + 1, len - 1);
    int far_j = bj(rng);
    int label = coin(rng);
    if (label == 1) {
      toks[far_i] = id_a;
      toks[far_j] = id_b;
    } else {
      int kind = neg_kind(rng);
      if (kind < 2) {
        // Close pair: 0..10 tokens between A and B.
        std::uniform_int_distribution<int> ci(0, len - 2);
        int i = ci(rng);
        int max_between = std::min(10, len - 2 - i);
        std::uniform_int_distribution<int> gd(0, max_between);
        int j = i + 1 + gd(rng);
        toks[i] = id_a;
        toks[j] = id_b;
      } else if (kind < 5) {
        toks[coin(rng) ? far_i : far_j] = id_a;  // lone A
      } else if (kind < 8) {
        toks[coin(rng) ? far_i : far_j] = id_b;  // lone B
      } else if (kind == 8) {
        // Two far A's: same marker count and placement as a positive, so a
        // linear readout of pooled marker fractions cannot separate them.
        toks[far_i] = id_a;
        toks[far_j] = id_a;
      } else {
        toks[far_i] = id_b;
        toks[far_j] = id_b;
      }
    }
    ClassificationExample ex;
    ex.label = label;
    ex.tokens.push_back(Vocab::kBos);
    for (int id : toks) ex.tokens.push_back(id);
    ex.tokens.push_back(Vocab::kEos);
    data.examples.push_back(std::move(ex));
  }
  return data;
}

std::vector<int> bracket_depth_tags(std::span<const std::string> tokens) {
  std::vector<int> tags;
  tags.reserve(tokens.size());
  int depth = 0;
  for (const std::string& t : tokens) {
    if (t == "(") {
      ++depth;
      tags.push_back(std::min(depth, 3));
    } else if (t == ")") {
      tags.push_back(std::min(depth, 3));
      --depth;
    } else {
      tags.push_back(std::min(depth, 3));
    }
  }
  return tags;
}

TaggingData synth_tagging(const SynthConfig& cfg, Vocab& vocab) {
  if (cfg.max_len < 4)
    throw std::invalid_argument("synth_tagging: max_len must be >= 4");
  std::mt19937_64 rng(cfg.seed);
  int min_len = std::max(4, cfg.max_len / 2);

  std::vector<int> filler_ids;
  for (int k = 0; k < 10; ++k) filler_ids.push_back(vocab.add("t" + std::to_string(k)));
  int id_open = vocab.add("(");
  int id_close = vocab.add(")");

  TaggingData data;
  data.tag_names = {"0", "1", "2", "3"};
  std::uniform_int_distribution<int> len_dist(min_len, cfg.max_len);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (int e = 0; e < cfg.n_examples; ++e) {
    int len = len_dist(rng);
    TaggingExample ex;
    ex.tokens.push_back(Vocab::kBos);
    int depth = 0;
    std::uniform_int_distribution<size_t> fill(0, filler_ids.size() - 1);
    for (int i = 0; i < len; ++i) {
      double p_open = std::max(0.08, 0.40 - 0.13 * depth);
      double p_close = depth > 0 ? std::min(0.55, 0.15 + 0.13 * depth) : 0.0;
      double r = u(rng);
      if (r < p_open) {
        ++depth;
        ex.tokens.push_back(id_open);
        ex.tags.push_back(std::min(depth, 3));
      } else if (r < p_open + p_close) {
        ex.tokens.push_back(id_close);
        ex.tags.push_back(std::min(depth, 3));
        --depth;
      } else {
        ex.tokens.push_back(filler_ids[fill(rng)]);
        ex.tags.push_back(std::min(depth, 3));
      }
    }
    ex.tokens.push_back(Vocab::kEos);
    data.examples.push_back(std::move(ex));
  }
  return data;
}

}  // namespace sst::data
