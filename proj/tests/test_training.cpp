#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "decra/training.hpp"
#include "doctest.h"

using namespace decra;

namespace {

ModelConfig small_config(std::size_t V, std::size_t T, std::size_t C) {
  ModelConfig c;
  c.vocab_size = V;
  c.max_len = T;
  c.num_classes = C;
  c.hidden = 8;
  c.num_layers = 1;
  c.num_heads = 1;
  c.ff_multiplier = 2;
  c.dropout_rate = 0.0;
  return c;
}

// Two linearly separable classes over disjoint keyword sets.
LabeledDataset separable_dataset(std::size_t per_class, std::uint64_t seed,
                                 std::shared_ptr<Vocabulary> vocab = nullptr) {
  std::vector<std::string> words0{"apple", "pear", "plum", "grape", "melon"};
  std::vector<std::string> words1{"bolt", "gear", "lathe", "rivet", "weld"};
  Rng rng(seed);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& words = c == 0 ? words0 : words1;
    for (std::size_t i = 0; i < per_class; ++i) {
      std::string text;
      for (int t = 0; t < 4; ++t) {
        if (!text.empty()) text += " ";
        text += words[rng.uniform_int(words.size())];
      }
      texts.push_back(text);
      labels.push_back(int(c));
    }
  }
  LabeledDataset ds;
  ds.vocab = vocab ? vocab
                   : std::make_shared<Vocabulary>(build_vocab(texts, 20));
  ds.num_classes = 2;
  ds.max_len = 6;
  ds.label_names = {"0", "1"};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Example ex = encode(texts[i], *ds.vocab, 6);
    ex.label = labels[i];
    ds.examples.push_back(ex);
  }
  return ds;
}

void zero_params(std::vector<Tensor> params) {
  for (Tensor& p : params)
    for (double& v : p.values()) v = 0.0;
}

}  // namespace

TEST_CASE("mode table") {
  CHECK(parse_mode("full") == TrainMode::full);
  CHECK_THROWS_AS(parse_mode("bogus"), std::invalid_argument);
  for (const char* name : {"baseline", "reg_only", "aug_only", "staged_reg",
                           "staged_reg_aug", "full"})
    CHECK(mode_name(parse_mode(name)) == name);
  CHECK_FALSE(mode_uses_aug(TrainMode::baseline));
  CHECK(mode_uses_aug(TrainMode::aug_only));
  CHECK(mode_uses_lm(TrainMode::reg_only));
  CHECK_FALSE(mode_uses_lm(TrainMode::staged_reg));
  CHECK(mode_pretrains(TrainMode::staged_reg_aug));
}

TEST_CASE("masked LM loss anchors at an untrained and a rigged model") {
  ModelConfig cfg = small_config(100, 8, 2);
  Model m = init_model(cfg, 4);
  Example ex;
  ex.token_ids = {2, 10, 20, 30, 40, 50, 0, 0};
  MaskSet mask;
  mask.positions = {2, 4};
  double loss = masked_lm_loss({ex}, {mask}, m).item();
  CHECK(loss > 0.0);
  CHECK(std::abs(loss - std::log(100.0)) < 0.5);

  // bias the head hard toward the right answer -> loss collapses
  Model rigged = init_model(cfg, 4);
  zero_params({rigged.lm.w, rigged.lm.b});
  MaskSet single;
  single.positions = {2};
  rigged.lm.b.values()[ex.token_ids[2]] = 40.0;
  CHECK(masked_lm_loss({ex}, {single}, rigged).item() < 1e-6);
}

TEST_CASE("masked LM loss matches a hand NLL oracle") {
  Model m = init_model(small_config(30, 8, 2), 9);
  Example a, b;
  a.token_ids = {2, 5, 7, 9, 11, 0, 0, 0};
  b.token_ids = {2, 6, 8, 10, 0, 0, 0, 0};
  MaskSet ma, mb;
  ma.positions = {1, 3, 4};
  mb.positions = {2};
  double loss = masked_lm_loss({a, b}, {ma, mb}, m).item();

  NoGradGuard guard;
  auto nll = [&](const Example& ex, const MaskSet& mask) {
    Example corrupted = apply_mask(ex, mask);
    Tensor logits = lm_predict(encode(corrupted, m), m.lm);
    double acc = 0.0;
    for (std::size_t t : mask.positions) {
      double mx = -1e300, z = 0.0;
      for (std::size_t v = 0; v < 30; ++v) mx = std::max(mx, logits.at(t, v));
      for (std::size_t v = 0; v < 30; ++v) z += std::exp(logits.at(t, v) - mx);
      acc -= logits.at(t, ex.token_ids[t]) - mx - std::log(z);
    }
    return acc / double(mask.positions.size());  // mean over masked positions
  };
  CHECK(std::abs(loss - 0.5 * (nll(a, ma) + nll(b, mb))) < 1e-8);
}

TEST_CASE("classification loss anchors") {
  Model m = init_model(small_config(30, 6, 5), 3);
  Example ex;
  ex.token_ids = {2, 5, 7, 0, 0, 0};
  ex.label = 2;

  Model flat = init_model(small_config(30, 6, 5), 3);
  zero_params({flat.cls.w, flat.cls.b});
  CHECK(classification_loss({ex}, flat).item() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-9));

  Model confident = init_model(small_config(30, 6, 5), 3);
  zero_params({confident.cls.w});
  confident.cls.b.values()[2] = 40.0;
  CHECK(classification_loss({ex}, confident).item() < 1e-6);

  // direct softmax/NLL recomputation
  NoGradGuard guard;
  Tensor logits = classify(encode(ex, m), m.cls);
  double mx = -1e300, z = 0.0;
  for (double v : logits.values()) mx = std::max(mx, v);
  for (double v : logits.values()) z += std::exp(v - mx);
  double expected = -(logits.values()[2] - mx - std::log(z));
  CHECK(std::abs(classification_loss({ex}, m).item() - expected) < 1e-10);
}

TEST_CASE("augmented loss equals plain loss when the classifier is input-blind") {
  Model m = init_model(small_config(30, 6, 4), 6);
  zero_params({m.cls.w, m.cls.b});
  Example ex;
  ex.token_ids = {2, 5, 7, 9, 0, 0};
  ex.label = 1;
  AugmentConfig aug;
  aug.beta = 4;
  aug.seed = 2;
  double l_aug = augmented_loss({ex}, {0}, m, aug).item();
  double l_ce = classification_loss({ex}, m).item();
  CHECK(l_aug == l_ce);
  CHECK(l_ce == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("augmented loss matches a manual per-run loop") {
  Model m = init_model(small_config(30, 8, 3), 11);
  Example a, b;
  a.token_ids = {2, 5, 7, 9, 11, 0, 0, 0};
  a.label = 0;
  b.token_ids = {2, 6, 8, 0, 0, 0, 0, 0};
  b.label = 2;
  AugmentConfig aug;
  aug.k = 3;
  aug.beta = 3;
  aug.seed = 5;
  double loss = augmented_loss({a, b}, {4, 9}, m, aug).item();

  NoGradGuard guard;
  double manual = 0.0;
  std::vector<std::pair<Example, std::size_t>> batch{{a, 4}, {b, 9}};
  for (auto& [ex, idx] : batch) {
    double per_ex = 0.0;
    for (const SoftSequence& s : kbeta_augment(ex, idx, m, aug)) {
      Tensor logits = classify(encode(s, m), m.cls);
      double mx = -1e300, z = 0.0;
      for (double v : logits.values()) mx = std::max(mx, v);
      for (double v : logits.values()) z += std::exp(v - mx);
      per_ex += -(logits.values()[s.label] - mx - std::log(z));
    }
    manual += per_ex / 3.0;
  }
  manual /= 2.0;
  CHECK(std::abs(loss - manual) < 1e-10);
}

TEST_CASE("final loss composition") {
  Model m = init_model(small_config(30, 8, 2), 15);
  Example a, b;
  a.token_ids = {2, 5, 7, 9, 0, 0, 0, 0};
  a.label = 0;
  b.token_ids = {2, 6, 8, 10, 12, 0, 0, 0};
  b.label = 1;
  std::vector<Example> batch{a, b};
  std::vector<std::size_t> idx{0, 1};

  TrainConfig cfg;
  cfg.mode = TrainMode::full;
  cfg.beta = 2;
  cfg.seed = 3;

  SUBCASE("weighted sum identity") {
    cfg.lambda_a = 0.7;
    cfg.lambda_lm = 1.3;
    LossTerms t = final_loss(batch, idx, m, cfg, 0);
    CHECK(t.aug_active);
    CHECK(t.lm_active);
    CHECK(std::abs(t.total.item() -
                   (t.l_ce + 0.7 * t.l_aug + 1.3 * t.l_lm)) < 1e-12);
  }

  SUBCASE("zero weights reduce exactly to the plain loss") {
    cfg.lambda_a = 0.0;
    cfg.lambda_lm = 0.0;
    LossTerms t = final_loss(batch, idx, m, cfg, 0);
    CHECK_FALSE(t.aug_active);
    CHECK_FALSE(t.lm_active);
    CHECK(t.l_aug == 0.0);
    CHECK(t.l_lm == 0.0);
    CHECK(t.total.item() == classification_loss(batch, m).item());
  }

  SUBCASE("negative weights are rejected") {
    cfg.lambda_a = -0.1;
    CHECK_THROWS_AS(final_loss(batch, idx, m, cfg, 0), std::invalid_argument);
  }

  SUBCASE("mode gating controls which heads receive gradient") {
    cfg.mode = TrainMode::baseline;
    m.zero_grad();
    backward(final_loss(batch, idx, m, cfg, 0).total);
    for (double g : m.lm.w.grad_view()) CHECK(g == 0.0);

    cfg.mode = TrainMode::reg_only;
    LossTerms t = final_loss(batch, idx, m, cfg, 0);
    CHECK_FALSE(t.aug_active);
    CHECK(t.lm_active);
    m.zero_grad();
    backward(t.total);
    double lm_grad = 0.0;
    for (double g : m.lm.w.grad_view()) lm_grad += std::abs(g);
    CHECK(lm_grad > 0.0);
  }
}

TEST_CASE("pretraining optimizes the LM head and leaves the classifier alone") {
  LabeledDataset ds = separable_dataset(10, 1);
  ModelConfig mc = small_config(ds.vocab->size(), 6, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.seed = 7;

  Model m = init_model(mc, 7);
  std::vector<double> cls_before = m.cls.w.values();
  std::vector<double> lm_before = m.lm.w.values();

  Model untouched = init_model(mc, 7);
  pretrain_lm(ds, untouched, 0, cfg);
  CHECK(untouched.lm.w.values() == lm_before);

  pretrain_lm(ds, m, 3, cfg);
  CHECK(m.cls.w.values() == cls_before);
  CHECK(m.lm.w.values() != lm_before);

  Model again = init_model(mc, 7);
  pretrain_lm(ds, again, 3, cfg);
  CHECK(again.lm.w.values() == m.lm.w.values());
}

TEST_CASE("baseline training solves a separable problem") {
  LabeledDataset train_set = separable_dataset(12, 2);
  LabeledDataset val_set = separable_dataset(4, 3, train_set.vocab);
  ModelConfig mc = small_config(train_set.vocab->size(), 6, 2);
  Model m = init_model(mc, 10);
  TrainConfig cfg;
  cfg.mode = TrainMode::baseline;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.seed = 10;
  TrainResult res = train(train_set, val_set, m, cfg);
  CHECK(res.best_accuracy == doctest::Approx(1.0));
  CHECK(res.reports.size() == 20);
  CHECK(res.reports.back().l_ce < res.reports.front().l_ce);

  double best_seen = 0.0;
  for (const EpochReport& r : res.reports)
    best_seen = std::max(best_seen, r.val_accuracy);
  CHECK(res.best_accuracy == best_seen);
  CHECK(evaluate(val_set, res.best) == res.best_accuracy);
}

TEST_CASE("zero-epoch training returns the initial model") {
  LabeledDataset ds = separable_dataset(4, 5);
  ModelConfig mc = small_config(ds.vocab->size(), 6, 2);
  Model m = init_model(mc, 1);
  std::vector<double> before = m.encoder.tok_emb.values();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.mode = TrainMode::baseline;
  TrainResult res = train(ds, ds, m, cfg);
  CHECK(res.reports.empty());
  CHECK(res.best_epoch == 0);
  CHECK(res.best.encoder.tok_emb.values() == before);
}

TEST_CASE("full mode with zero weights reproduces the baseline trajectory") {
  LabeledDataset train_set = separable_dataset(8, 4);
  LabeledDataset val_set = separable_dataset(3, 6, train_set.vocab);
  ModelConfig mc = small_config(train_set.vocab->size(), 6, 2);

  TrainConfig base;
  base.mode = TrainMode::baseline;
  base.learning_rate = 1e-3;
  base.epochs = 5;
  base.seed = 12;

  TrainConfig full = base;
  full.mode = TrainMode::full;
  full.lambda_a = 0.0;
  full.lambda_lm = 0.0;

  Model ma = init_model(mc, 12);
  Model mb = init_model(mc, 12);
  TrainResult ra = train(train_set, val_set, ma, base);
  TrainResult rb = train(train_set, val_set, mb, full);
  REQUIRE(ra.reports.size() == rb.reports.size());
  for (std::size_t i = 0; i < ra.reports.size(); ++i) {
    CHECK(ra.reports[i].l_ce == rb.reports[i].l_ce);
    CHECK(ra.reports[i].val_accuracy == rb.reports[i].val_accuracy);
  }
  auto na = ma.named_parameters(), nb = mb.named_parameters();
  for (std::size_t i = 0; i < na.size(); ++i)
    CHECK(na[i].second.values() == nb[i].second.values());
}

TEST_CASE("evaluate counts argmax agreements") {
  LabeledDataset ds = separable_dataset(10, 8);
  ModelConfig mc = small_config(ds.vocab->size(), 6, 2);
  Model flat = init_model(mc, 2);
  zero_params({flat.cls.w, flat.cls.b});
  // input-blind classifier predicts class 0 everywhere
  CHECK(evaluate(ds, flat) == doctest::Approx(0.5));

  Model m = init_model(mc, 3);
  std::size_t correct = 0;
  for (const Example& ex : ds.examples)
    if (predict_class(ex, m) == ex.label) ++correct;
  CHECK(evaluate(ds, m) == doctest::Approx(double(correct) / ds.size()));
}
