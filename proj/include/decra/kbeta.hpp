#pragma once

#include <cstdint>
#include <vector>

#include "decra/dataset.hpp"
#include "decra/model.hpp"
#include "decra/rng.hpp"

namespace decra {

// Positions masked in one corruption run; never CLS (position 0) or PAD.
struct MaskSet {
  std::vector<std::size_t> positions;  // sorted ascending
};

struct AugmentConfig {
  std::size_t k = 2;
  std::size_t beta = 18;
  double p_mask = 0.15;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  void validate(std::size_t vocab_size) const;
};

std::vector<std::size_t> eligible_positions(const Example& ex);

// Independent Bernoulli(p_mask) per eligible position; if no position is
// drawn, one is forced uniformly so the mask set is never empty.
MaskSet sample_mask_set(const Example& ex, double p_mask, Rng& rng);

Example apply_mask(const Example& ex, const MaskSet& mask);

// Top-k of a length-V logits row (ties to the lower token id), softmax at
// the given temperature over just those k. Result sorted by token id.
std::vector<std::pair<int, double>> topk_renormalize(
    const std::vector<double>& logits, std::size_t k, double temperature);

// The full predict / top-k / softmax / replace pipeline, run beta times
// with independent mask sets. Predictions are computed without gradients;
// the outputs are data. Mask stream for run j is keyed by
// (cfg.seed, example_index, j).
std::vector<SoftSequence> kbeta_augment(const Example& ex,
                                        std::size_t example_index,
                                        const Model& model,
                                        const AugmentConfig& cfg);

// Materializes one hard token sequence by sampling each row.
Example sample_hard(const SoftSequence& soft, Rng& rng);

}  // namespace decra
