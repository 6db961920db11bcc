#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace decra {

// Whitespace/lowercase vocabulary with fixed reserved ids.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kCls = 2;
  static constexpr int kUnk = 3;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;

  std::size_t size() const { return id_to_token.size(); }
  int lookup(const std::string& token) const;
};

// Lowercases, strips punctuation, splits on whitespace.
std::vector<std::string> tokenize(const std::string& text);

// Reserved ids 0-3, then tokens by descending frequency (ties broken
// lexicographically) until max_vocab is reached.
Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t max_vocab);

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

struct Example {
  std::vector<int> token_ids;  // [CLS, tokens..., PAD...] of length T
  int label = 0;
};

// One generated sequence: per-position sparse distributions over the
// vocabulary. Unmasked positions stay one-hot at the original token id.
struct SoftSequence {
  std::vector<std::vector<std::pair<int, double>>> rows;
  int label = 0;
  std::size_t source_index = 0;
  std::size_t run_index = 0;                  // j in [1, beta]
  std::vector<std::size_t> masked_positions;  // rows that were replaced
};

SoftSequence one_hot_sequence(const Example& ex);

struct LabeledDataset {
  std::vector<Example> examples;
  std::size_t num_classes = 0;
  std::size_t max_len = 0;
  std::shared_ptr<Vocabulary> vocab;
  std::vector<std::string> label_names;  // sorted unique label values

  std::size_t size() const { return examples.size(); }
};

Example encode(const std::string& text, const Vocabulary& vocab, std::size_t T);
// In-vocab tokens back to text; PAD/CLS dropped.
std::string decode(const Example& ex, const Vocabulary& vocab);

// JSONL loader: one {"text": ..., "label": ...} object per line. When vocab
// is null a vocabulary is built from this file. num_classes == 0 infers C
// from the data; otherwise a cardinality mismatch is an error.
LabeledDataset load_jsonl(const std::string& path,
                          std::shared_ptr<Vocabulary> vocab, std::size_t T,
                          std::size_t num_classes, std::size_t max_vocab = 2000);

struct SubsetSpec {
  std::size_t num_subsets = 15;
  std::size_t train_per_class = 40;
  std::size_t val_per_class = 5;
  std::uint64_t seed = 0;
};

struct SubsetPair {
  LabeledDataset train;
  LabeledDataset val;
  std::vector<std::size_t> train_indices;  // into the source dataset
  std::vector<std::size_t> val_indices;
};

// Class-balanced sampling without replacement within a subset; subsets are
// drawn independently of each other. Subset i uses seed derived from
// (spec.seed, i).
std::vector<SubsetPair> sample_subsets(const LabeledDataset& data,
                                       const SubsetSpec& spec);

// Shuffled index batches for one epoch; the final short batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch);

}  // namespace decra
