#pragma once

#include "sst/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sst::data {

/// Parse failure carrying the offending location.
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what) {}
};

/// Token/id bijection with fixed reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;  // <s>
  static constexpr int kEos = 3;  // </s>

  Vocab();

  int add(const std::string& token);            // id of token, inserting
  int id_of(const std::string& token) const;    // kUnk when missing
  const std::string& token_of(int id) const;
  size_t size() const { return tokens_.size(); }
  uint64_t hash() const;  // FNV-1a over the id -> token list

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

struct ClassificationExample {
  std::vector<int> tokens;  // includes <s> ... </s>
  int label = 0;
};

struct TaggingExample {
  std::vector<int> tokens;  // includes <s> ... </s>
  std::vector<int> tags;    // one per interior token
};

struct ClassificationData {
  std::vector<ClassificationExample> examples;
  std::vector<std::string> label_names;  // first-seen order
};

struct TaggingData {
  std::vector<TaggingExample> examples;
  std::vector<std::string> tag_names;  // first-seen order
};

/// GloVe-style text embeddings: token then `dim` decimal floats per line.
/// Reserved rows: pad = 0, unknown = elementwise mean of loaded vectors,
/// boundary tokens = seeded uniform(-0.05, 0.05).
struct Embeddings {
  Vocab vocab;
  Tensor table;  // vocab.size() x dim
};
Embeddings load_embeddings(const std::string& path, Index dim,
                           uint64_t seed = 1);

/// "label<TAB>text"; text is lowercased and whitespace-tokenized. New labels
/// are assigned ids in first-seen order. With grow=false, unseen tokens map
/// to the unknown id instead of extending the vocabulary.
ClassificationData load_classification_tsv(const std::string& path,
                                           Vocab& vocab, bool grow = true);

/// Blank-line-separated sentences of whitespace-separated columns; token in
/// column 0, tag in `tag_column`. "-DOCSTART-" sentences are skipped. Case
/// is preserved.
TaggingData load_conll(const std::string& path, Vocab& vocab, int tag_column,
                       bool grow = true);

struct BioesResult {
  std::vector<std::string> tags;
  int repairs = 0;  // I-tags without a matching open span, re-read as B
};

/// BIO -> BIOES: singleton B becomes S, the final I of a span becomes E.
BioesResult bio_to_bioes(std::span<const std::string> tags);

/// BIOES -> BIO (S -> B, E -> I); with bio_to_bioes this is a fixpoint.
std::vector<std::string> bioes_to_bio(std::span<const std::string> tags);

bool bioes_well_formed(std::span<const std::string> tags);

/// Synthetic classification: 20 filler symbols plus markers A and B. The
/// label is 1 iff some A precedes some B with at least max_len/2 tokens
/// strictly between them. Negatives mix close A..B pairs with single-marker
/// sequences; classes are balanced by construction.
struct SynthConfig {
  int n_examples = 10000;
  int max_len = 64;
  uint64_t seed = 7;
};
ClassificationData synth_classification(const SynthConfig& cfg, Vocab& vocab);

/// Oracle predicate matching the generator's label rule.
bool synth_classification_label(std::span<const std::string> tokens,
                                int max_len);

/// Synthetic tagging: bracket tokens over fillers; the tag is the nesting
/// depth capped at 3, counted entering before / exiting after, so "( ( ) )"
/// tags as 1 2 2 1.
TaggingData synth_tagging(const SynthConfig& cfg, Vocab& vocab);

std::vector<int> bracket_depth_tags(std::span<const std::string> tokens);

}  // namespace sst::data
