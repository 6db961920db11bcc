#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "decra/kbeta.hpp"
#include "decra/tensor.hpp"
#include "decra/training.hpp"
#include "doctest.h"

using namespace decra;

namespace {

ModelConfig small_config(std::size_t V = 20, std::size_t T = 8) {
  ModelConfig c;
  c.vocab_size = V;
  c.max_len = T;
  c.num_classes = 2;
  c.hidden = 8;
  c.num_layers = 1;
  c.num_heads = 1;
  c.ff_multiplier = 2;
  c.dropout_rate = 0.0;
  return c;
}

Example make_example(std::vector<int> ids, int label = 0) {
  Example e;
  e.token_ids = std::move(ids);
  e.label = label;
  return e;
}

}  // namespace

TEST_CASE("eligible positions exclude CLS and PAD") {
  Example ex = make_example({2, 5, 7, 0, 0});
  CHECK(eligible_positions(ex) == std::vector<std::size_t>{1, 2});

  Example only_cls = make_example({2, 0, 0});
  CHECK(eligible_positions(only_cls).empty());
}

TEST_CASE("mask sets are never empty even at p_mask -> 0") {
  Example ex = make_example({2, 5, 7, 9, 0});
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    MaskSet m = sample_mask_set(ex, 1e-12, rng);
    REQUIRE(m.positions.size() == 1);
    CHECK(m.positions[0] >= 1);
    CHECK(m.positions[0] <= 3);
  }

  Example only_cls = make_example({2, 0, 0});
  CHECK_THROWS_AS(sample_mask_set(only_cls, 0.15, rng), std::invalid_argument);
}

TEST_CASE("CLS and PAD are never masked") {
  Example ex = make_example({2, 5, 7, 9, 11, 0, 0, 0});
  Rng rng(2);
  for (int rep = 0; rep < 10000; ++rep) {
    MaskSet m = sample_mask_set(ex, 0.5, rng);
    for (std::size_t p : m.positions) {
      CHECK(p >= 1);
      CHECK(p <= 4);
    }
    CHECK(std::is_sorted(m.positions.begin(), m.positions.end()));
  }
}

TEST_CASE("per-position mask frequency matches p_mask") {
  std::vector<int> ids(22, 5);
  ids[0] = 2;
  ids[21] = 0;
  Example ex = make_example(ids);  // 20 eligible positions
  Rng rng(3);
  const int draws = 100000;
  std::vector<int> hits(22, 0);
  for (int rep = 0; rep < draws; ++rep) {
    MaskSet m = sample_mask_set(ex, 0.15, rng);
    for (std::size_t p : m.positions) hits[p] += 1;
  }
  // with 20 eligible positions the forced-minimum correction is ~0.04%
  for (std::size_t p = 1; p <= 20; ++p) {
    double freq = double(hits[p]) / draws;
    CHECK(freq == doctest::Approx(0.15).epsilon(0.14));
    CHECK(std::abs(freq - 0.15) < 0.02);
  }
}

TEST_CASE("apply_mask replaces exactly the chosen positions") {
  Example ex = make_example({2, 5, 7, 9, 0});
  MaskSet m;
  m.positions = {1, 3};
  Example masked = apply_mask(ex, m);
  CHECK(masked.token_ids == std::vector<int>{2, 1, 7, 1, 0});
  CHECK(masked.label == ex.label);

  // restoring the originals inverts the corruption
  Example restored = masked;
  for (std::size_t p : m.positions) restored.token_ids[p] = ex.token_ids[p];
  CHECK(restored.token_ids == ex.token_ids);
}

TEST_CASE("topk_renormalize anchors") {
  auto out = topk_renormalize({2.0, 1.0, -1.0}, 2, 1.0);
  REQUIRE(out.size() == 2);
  CHECK(out[0].first == 0);
  CHECK(out[1].first == 1);
  double z = std::exp(2.0) + std::exp(1.0);
  CHECK(out[0].second == doctest::Approx(std::exp(2.0) / z).epsilon(1e-9));
  CHECK(out[1].second == doctest::Approx(std::exp(1.0) / z).epsilon(1e-9));
  CHECK(out[0].second == doctest::Approx(0.731058578630).epsilon(1e-9));

  auto one = topk_renormalize({0.3, 1.7, -2.0}, 1, 1.0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].first == 1);
  CHECK(one[0].second == doctest::Approx(1.0));
}

TEST_CASE("k equal to vocab size matches a full softmax") {
  Rng rng(7);
  std::vector<double> logits(30);
  for (double& v : logits) v = rng.normal() * 2.0;
  auto out = topk_renormalize(logits, 30, 1.0);
  REQUIRE(out.size() == 30);
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  for (const auto& [id, p] : out)
    CHECK(std::abs(p - std::exp(logits[id] - mx) / z) < 1e-9);
}

TEST_CASE("topk tie break picks the lower token id") {
  auto out = topk_renormalize({1.0, 5.0, 5.0, 5.0}, 2, 1.0);
  REQUIRE(out.size() == 2);
  CHECK(out[0].first == 1);
  CHECK(out[1].first == 2);
  CHECK(out[0].second == doctest::Approx(0.5));
}

TEST_CASE("topk matches an exhaustive-sort oracle") {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> logits(12);
    for (double& v : logits) v = rng.normal();
    std::size_t k = 1 + rng.uniform_int(12);
    double temp = 0.5 + rng.uniform();

    std::vector<int> ids(12);
    for (int i = 0; i < 12; ++i) ids[i] = i;
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (logits[a] != logits[b]) return logits[a] > logits[b];
      return a < b;
    });
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    double mx = -1e300;
    for (int id : ids) mx = std::max(mx, logits[id] / temp);
    double z = 0.0;
    for (int id : ids) z += std::exp(logits[id] / temp - mx);

    auto out = topk_renormalize(logits, k, temp);
    REQUIRE(out.size() == k);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(out[i].first == ids[i]);
      CHECK(std::abs(out[i].second -
                     std::exp(logits[ids[i]] / temp - mx) / z) < 1e-10);
    }
  }
}

TEST_CASE("topk rejects k larger than the row") {
  CHECK_THROWS_AS(topk_renormalize({1.0, 2.0}, 3, 1.0), std::invalid_argument);
  AugmentConfig bad;
  bad.k = 50;
  CHECK_THROWS_AS(bad.validate(20), std::invalid_argument);
}

TEST_CASE("kbeta_augment structural contract") {
  Model m = init_model(small_config(), 5);
  Example ex = make_example({2, 5, 7, 9, 11, 0, 0, 0}, 1);
  AugmentConfig cfg;
  cfg.k = 3;
  cfg.beta = 6;
  cfg.p_mask = 0.3;
  cfg.seed = 42;
  auto augs = kbeta_augment(ex, 17, m, cfg);
  REQUIRE(augs.size() == 6);
  for (std::size_t j = 0; j < augs.size(); ++j) {
    const SoftSequence& s = augs[j];
    CHECK(s.label == 1);
    CHECK(s.source_index == 17);
    CHECK(s.run_index == j + 1);
    REQUIRE(s.rows.size() == ex.token_ids.size());
    REQUIRE_FALSE(s.masked_positions.empty());
    std::set<std::size_t> masked(s.masked_positions.begin(),
                                 s.masked_positions.end());
    for (std::size_t t = 0; t < s.rows.size(); ++t) {
      double sum = 0.0;
      for (const auto& [id, p] : s.rows[t]) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      if (masked.count(t)) {
        CHECK(t >= 1);
        CHECK(ex.token_ids[t] != Vocabulary::kPad);
        CHECK(s.rows[t].size() == cfg.k);
      } else {
        REQUIRE(s.rows[t].size() == 1);
        CHECK(s.rows[t][0].first == ex.token_ids[t]);
        CHECK(s.rows[t][0].second == 1.0);
      }
    }
  }

  // determinism
  auto again = kbeta_augment(ex, 17, m, cfg);
  for (std::size_t j = 0; j < augs.size(); ++j) {
    CHECK(again[j].masked_positions == augs[j].masked_positions);
    CHECK(again[j].rows == augs[j].rows);
  }

  // a different example index draws different masks somewhere
  auto other = kbeta_augment(ex, 18, m, cfg);
  bool differs = false;
  for (std::size_t j = 0; j < augs.size(); ++j)
    if (other[j].masked_positions != augs[j].masked_positions) differs = true;
  CHECK(differs);
}

TEST_CASE("beta runs cover diverse mask sets") {
  Model m = init_model(small_config(20, 16), 9);
  std::vector<int> ids(16, 6);
  ids[0] = 2;
  Example ex = make_example(ids);
  AugmentConfig cfg;
  cfg.beta = 18;
  cfg.seed = 3;
  auto augs = kbeta_augment(ex, 0, m, cfg);
  std::set<std::size_t> union_masked;
  std::set<std::vector<std::size_t>> distinct;
  for (const auto& s : augs) {
    union_masked.insert(s.masked_positions.begin(), s.masked_positions.end());
    distinct.insert(s.masked_positions);
  }
  CHECK(union_masked.size() >= 10);
  CHECK(distinct.size() >= 10);
}

TEST_CASE("degenerate k=1 beta=1 equals a hard argmax replacement") {
  Model m = init_model(small_config(), 21);
  Example ex = make_example({2, 5, 7, 9, 0, 0, 0, 0});
  AugmentConfig cfg;
  cfg.k = 1;
  cfg.beta = 1;
  cfg.p_mask = 0.5;
  cfg.seed = 4;
  auto augs = kbeta_augment(ex, 0, m, cfg);
  REQUIRE(augs.size() == 1);
  const SoftSequence& s = augs[0];

  // replay the mask stream and the LM argmax by hand
  Rng rng(derive_seed(cfg.seed, Stream::aug_mask, {0, 1}));
  MaskSet mask = sample_mask_set(ex, cfg.p_mask, rng);
  CHECK(s.masked_positions == mask.positions);
  Example corrupted = apply_mask(ex, mask);
  NoGradGuard guard;
  Tensor logits = lm_predict(encode(corrupted, m), m.lm);
  for (std::size_t p : mask.positions) {
    REQUIRE(s.rows[p].size() == 1);
    CHECK(s.rows[p][0].second == doctest::Approx(1.0));
    int best = 0;
    for (std::size_t v = 1; v < m.config.vocab_size; ++v)
      if (logits.at(p, v) > logits.at(p, best)) best = int(v);
    CHECK(s.rows[p][0].first == best);
  }
}

TEST_CASE("augmentation is data: no gradient flows back through it") {
  Model m = init_model(small_config(), 2);
  Example ex = make_example({2, 5, 7, 9, 0, 0, 0, 0}, 1);
  AugmentConfig cfg;
  cfg.beta = 2;
  cfg.seed = 1;
  m.zero_grad();
  auto augs = kbeta_augment(ex, 0, m, cfg);
  Tensor loss = augmented_loss_from({augs}, m.config.num_classes, m);
  backward(loss);
  // lm head params feed only the generation step, which is detached
  for (double g : m.lm.w.grad_view()) CHECK(g == 0.0);
  for (double g : m.lm.b.grad_view()) CHECK(g == 0.0);
  // while the classifier path does receive gradient
  double total = 0.0;
  for (double g : m.cls.w.grad_view()) total += std::abs(g);
  CHECK(total > 0.0);
}

TEST_CASE("sample_hard on a one-hot sequence is the identity") {
  Example ex = make_example({2, 5, 7, 0, 0}, 1);
  Rng rng(6);
  Example out = sample_hard(one_hot_sequence(ex), rng);
  CHECK(out.token_ids == ex.token_ids);
  CHECK(out.label == 1);
}

TEST_CASE("sample_hard draws by row probability") {
  SoftSequence s = one_hot_sequence(Example{{2, 5, 7}, 0});
  s.rows[1] = {{4, 0.7}, {9, 0.3}};
  Rng rng(8);
  int hits = 0;
  const int draws = 20000;
  for (int rep = 0; rep < draws; ++rep)
    if (sample_hard(s, rng).token_ids[1] == 4) hits += 1;
  CHECK(double(hits) / draws == doctest::Approx(0.7).epsilon(0.03));

  Rng a(11), b(11);
  CHECK(sample_hard(s, a).token_ids == sample_hard(s, b).token_ids);
}
