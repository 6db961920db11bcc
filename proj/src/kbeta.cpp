#include "decra/kbeta.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace decra {

void AugmentConfig::validate(std::size_t vocab_size) const {
  if (k == 0) throw std::invalid_argument("AugmentConfig: k must be positive");
  if (k > vocab_size)
    throw std::invalid_argument("AugmentConfig: k exceeds vocabulary size");
  if (beta == 0)
    throw std::invalid_argument("AugmentConfig: beta must be positive");
  if (p_mask <= 0.0 || p_mask >= 1.0)
    throw std::invalid_argument("AugmentConfig: p_mask must be in (0,1)");
  if (temperature <= 0.0)
    throw std::invalid_argument("AugmentConfig: temperature must be positive");
}

std::vector<std::size_t> eligible_positions(const Example& ex) {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < ex.token_ids.size(); ++t)
    if (ex.token_ids[t] != Vocabulary::kPad) out.push_back(t);
  return out;
}

MaskSet sample_mask_set(const Example& ex, double p_mask, Rng& rng) {
  std::vector<std::size_t> eligible = eligible_positions(ex);
  if (eligible.empty())
    throw std::invalid_argument("sample_mask_set: no maskable positions");
  MaskSet mask;
  for (std::size_t t : eligible)
    if (rng.bernoulli(p_mask)) mask.positions.push_back(t);
  if (mask.positions.empty())
    mask.positions.push_back(eligible[rng.uniform_int(eligible.size())]);
  return mask;
}

Example apply_mask(const Example& ex, const MaskSet& mask) {
  Example out = ex;
  for (std::size_t t : mask.positions) {
    if (t == 0 || t >= out.token_ids.size())
      throw std::invalid_argument("apply_mask: position out of range");
    out.token_ids[t] = Vocabulary::kMask;
  }
  return out;
}

std::vector<std::pair<int, double>> topk_renormalize(
    const std::vector<double>& logits, std::size_t k, double temperature) {
  if (k == 0) throw std::invalid_argument("topk_renormalize: k must be positive");
  if (k > logits.size())
    throw std::invalid_argument("topk_renormalize: k exceeds vocabulary size");

  std::vector<int> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k),
                    ids.end(), [&](int a, int b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());

  double mx = logits[ids[0]];
  for (int id : ids) mx = std::max(mx, logits[id]);
  std::vector<std::pair<int, double>> out;
  out.reserve(k);
  double z = 0.0;
  for (int id : ids) {
    double e = std::exp((logits[id] - mx) / temperature);
    out.emplace_back(id, e);
    z += e;
  }
  for (auto& [id, p] : out) p /= z;
  return out;
}

std::vector<SoftSequence> kbeta_augment(const Example& ex,
                                        std::size_t example_index,
                                        const Model& model,
                                        const AugmentConfig& cfg) {
  cfg.validate(model.config.vocab_size);
  NoGradGuard no_grad;  // generated data carries no gradient path
  std::vector<SoftSequence> out;
  out.reserve(cfg.beta);
  for (std::size_t j = 1; j <= cfg.beta; ++j) {
    Rng rng(derive_seed(cfg.seed, Stream::aug_mask, {example_index, j}));
    MaskSet mask = sample_mask_set(ex, cfg.p_mask, rng);
    Example masked = apply_mask(ex, mask);
    Tensor emb = encode(masked, model, /*train_mode=*/false);
    Tensor logits = lm_predict(emb, model.lm);

    SoftSequence seq = one_hot_sequence(ex);
    seq.source_index = example_index;
    seq.run_index = j;
    seq.masked_positions = mask.positions;
    std::size_t V = model.config.vocab_size;
    for (std::size_t t : mask.positions) {
      std::vector<double> row(logits.values().begin() + t * V,
                              logits.values().begin() + (t + 1) * V);
      seq.rows[t] = topk_renormalize(row, cfg.k, cfg.temperature);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Example sample_hard(const SoftSequence& soft, Rng& rng) {
  Example ex;
  ex.label = soft.label;
  ex.token_ids.reserve(soft.rows.size());
  for (const auto& row : soft.rows) {
    double u = rng.uniform();
    double acc = 0.0;
    int chosen = row.back().first;
    for (const auto& [id, p] : row) {
      acc += p;
      if (u < acc) {
        chosen = id;
        break;
      }
    }
    ex.token_ids.push_back(chosen);
  }
  return ex;
}

}  // namespace decra
