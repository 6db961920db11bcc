#include "decra/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace decra {

namespace {

// Stream sub-tags for dropout so each loss term draws independently.
constexpr std::uint64_t kDropCe = 0;
constexpr std::uint64_t kDropAug = 1;
constexpr std::uint64_t kDropLm = 2;
constexpr std::uint64_t kDropPretrain = 3;

Tensor one_hot_targets(const std::vector<int>& labels, std::size_t num_classes) {
  std::vector<double> vals(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw std::invalid_argument("label out of range");
    vals[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::from({labels.size(), num_classes}, std::move(vals));
}

Tensor mean_of(const std::vector<Tensor>& scalars) {
  Tensor acc = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

void check_term_finite(const Tensor& t, const char* term) {
  if (!std::isfinite(t.item()))
    throw std::runtime_error(std::string("training diverged: ") + term +
                             " is not finite");
}

}  // namespace

TrainMode parse_mode(const std::string& name) {
  if (name == "baseline") return TrainMode::baseline;
  if (name == "reg_only") return TrainMode::reg_only;
  if (name == "aug_only") return TrainMode::aug_only;
  if (name == "staged_reg") return TrainMode::staged_reg;
  if (name == "staged_reg_aug") return TrainMode::staged_reg_aug;
  if (name == "full") return TrainMode::full;
  throw std::invalid_argument("unknown training mode: " + name);
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::reg_only: return "reg_only";
    case TrainMode::aug_only: return "aug_only";
    case TrainMode::staged_reg: return "staged_reg";
    case TrainMode::staged_reg_aug: return "staged_reg_aug";
    case TrainMode::full: return "full";
  }
  throw std::invalid_argument("bad mode value");
}

bool mode_uses_aug(TrainMode mode) {
  return mode == TrainMode::aug_only || mode == TrainMode::staged_reg_aug ||
         mode == TrainMode::full;
}

bool mode_uses_lm(TrainMode mode) {
  return mode == TrainMode::reg_only || mode == TrainMode::full;
}

bool mode_pretrains(TrainMode mode) {
  return mode == TrainMode::staged_reg || mode == TrainMode::staged_reg_aug;
}

void TrainConfig::validate() const {
  if (lambda_a < 0.0 || lambda_lm < 0.0)
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  if (batch_size == 0)
    throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
}

AugmentConfig TrainConfig::augment_config(std::uint64_t stream_seed) const {
  AugmentConfig a;
  a.k = k;
  a.beta = beta;
  a.p_mask = p_mask;
  a.temperature = temperature;
  a.seed = stream_seed;
  return a;
}

Tensor classification_loss(const std::vector<Example>& batch,
                           const Model& model, bool train_mode,
                           Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("classification_loss: empty batch");
  std::vector<Tensor> logit_rows;
  std::vector<int> labels;
  logit_rows.reserve(batch.size());
  for (const Example& ex : batch) {
    Tensor emb = encode(ex, model, train_mode, dropout_rng);
    logit_rows.push_back(classify(emb, model.cls));
    labels.push_back(ex.label);
  }
  Tensor logits = stack_rows(logit_rows);
  return cross_entropy(logits, one_hot_targets(labels, model.config.num_classes));
}

Tensor masked_lm_loss(const std::vector<Example>& batch,
                      const std::vector<MaskSet>& masks, const Model& model,
                      bool train_mode, Rng* dropout_rng) {
  if (batch.empty() || batch.size() != masks.size())
    throw std::invalid_argument("masked_lm_loss: batch/mask size mismatch");
  std::size_t V = model.config.vocab_size;
  std::vector<Tensor> per_example;
  per_example.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (masks[i].positions.empty())
      throw std::invalid_argument("masked_lm_loss: empty mask set");
    Example corrupted = apply_mask(batch[i], masks[i]);
    Tensor emb = encode(corrupted, model, train_mode, dropout_rng);
    Tensor logits = lm_predict(emb, model.lm);
    Tensor masked_logits = select_rows(logits, masks[i].positions);
    std::vector<int> targets;
    for (std::size_t t : masks[i].positions)
      targets.push_back(batch[i].token_ids[t]);
    per_example.push_back(
        cross_entropy(masked_logits, one_hot_targets(targets, V)));
  }
  return mean_of(per_example);
}

Tensor augmented_loss_from(const std::vector<std::vector<SoftSequence>>& augs,
                           std::size_t num_classes, const Model& model,
                           bool train_mode, Rng* dropout_rng) {
  if (augs.empty()) throw std::invalid_argument("augmented_loss: empty batch");
  std::vector<Tensor> per_example;
  per_example.reserve(augs.size());
  for (const auto& runs : augs) {
    if (runs.empty())
      throw std::invalid_argument("augmented_loss: example has no runs");
    std::vector<Tensor> per_run;
    per_run.reserve(runs.size());
    for (const SoftSequence& seq : runs) {
      Tensor emb = encode(seq, model, train_mode, dropout_rng);
      Tensor logits = classify(emb, model.cls);
      per_run.push_back(
          cross_entropy(logits, one_hot_targets({seq.label}, num_classes)));
    }
    per_example.push_back(mean_of(per_run));
  }
  return mean_of(per_example);
}

Tensor augmented_loss(const std::vector<Example>& batch,
                      const std::vector<std::size_t>& example_indices,
                      const Model& model, const AugmentConfig& aug_cfg,
                      bool train_mode, Rng* dropout_rng) {
  if (batch.size() != example_indices.size())
    throw std::invalid_argument("augmented_loss: index list size mismatch");
  std::vector<std::vector<SoftSequence>> augs;
  augs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    augs.push_back(kbeta_augment(batch[i], example_indices[i], model, aug_cfg));
  return augmented_loss_from(augs, model.config.num_classes, model, train_mode,
                             dropout_rng);
}

LossTerms final_loss(const std::vector<Example>& batch,
                     const std::vector<std::size_t>& example_indices,
                     const Model& model, const TrainConfig& cfg,
                     std::size_t epoch, bool train_mode, Rng* dropout_rng) {
  cfg.validate();
  LossTerms terms;
  terms.aug_active = mode_uses_aug(cfg.mode) && cfg.lambda_a > 0.0;
  terms.lm_active = mode_uses_lm(cfg.mode) && cfg.lambda_lm > 0.0;

  Tensor total = classification_loss(batch, model, train_mode, dropout_rng);
  check_term_finite(total, "L_CE");
  terms.l_ce = total.item();

  if (terms.aug_active) {
    AugmentConfig aug =
        cfg.augment_config(derive_seed(cfg.seed, Stream::aug_mask, {epoch}));
    Tensor l_aug = augmented_loss(batch, example_indices, model, aug,
                                  train_mode, dropout_rng);
    check_term_finite(l_aug, "L_aug");
    terms.l_aug = l_aug.item();
    total = add(total, scale(l_aug, cfg.lambda_a));
  }
  if (terms.lm_active) {
    std::vector<MaskSet> masks;
    masks.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Rng rng(derive_seed(cfg.seed, Stream::reg_mask,
                          {epoch, example_indices[i]}));
      masks.push_back(sample_mask_set(batch[i], cfg.p_mask, rng));
    }
    Tensor l_lm = masked_lm_loss(batch, masks, model, train_mode, dropout_rng);
    check_term_finite(l_lm, "L_LM");
    terms.l_lm = l_lm.item();
    total = add(total, scale(l_lm, cfg.lambda_lm));
  }
  terms.total = total;
  return terms;
}

void pretrain_lm(const LabeledDataset& data, Model& model, std::size_t epochs,
                 const TrainConfig& cfg) {
  if (data.examples.empty())
    throw std::invalid_argument("pretrain_lm: empty dataset");
  if (epochs == 0) return;
  cfg.validate();
  std::uint64_t seed = derive_seed(cfg.seed, Stream::reg_mask, {kDropPretrain});
  auto params = model.parameters();
  AdamState opt = AdamState::init(params, cfg.learning_rate);
  model.zero_grad();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    auto batches = epoch_batches(data.size(), cfg.batch_size, seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Example> batch;
      std::vector<MaskSet> masks;
      for (std::size_t idx : batches[b]) {
        batch.push_back(data.examples[idx]);
        Rng rng(derive_seed(seed, Stream::reg_mask, {epoch, idx}));
        masks.push_back(sample_mask_set(batch.back(), cfg.p_mask, rng));
      }
      Rng drop(derive_seed(seed, Stream::dropout, {epoch, b, kDropPretrain}));
      Tensor loss = masked_lm_loss(batch, masks, model, true, &drop);
      check_term_finite(loss, "L_LM");
      backward(loss);
      adam_step(params, opt);
    }
  }
}

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& val_set,
                  Model& model, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.examples.empty() || val_set.examples.empty())
    throw std::invalid_argument("train: empty split");

  if (mode_pretrains(cfg.mode))
    pretrain_lm(train_set, model, cfg.pretrain_epochs, cfg);

  TrainResult result;
  result.best = model.clone();
  result.best_accuracy = -1.0;
  if (cfg.epochs == 0) {
    result.best_accuracy = 0.0;
    return result;
  }

  auto params = model.parameters();
  AdamState opt = AdamState::init(params, cfg.learning_rate);
  model.zero_grad();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    auto batches =
        epoch_batches(train_set.size(), cfg.batch_size, cfg.seed, epoch);
    EpochReport report;
    report.epoch = epoch + 1;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Example> batch;
      for (std::size_t idx : batches[b]) batch.push_back(train_set.examples[idx]);
      Rng drop(derive_seed(cfg.seed, Stream::dropout, {epoch, b, kDropCe}));
      LossTerms terms =
          final_loss(batch, batches[b], model, cfg, epoch, true, &drop);
      backward(terms.total);
      adam_step(params, opt);
      report.l_ce += terms.l_ce;
      report.l_aug += terms.l_aug;
      report.l_lm += terms.l_lm;
    }
    report.l_ce /= static_cast<double>(batches.size());
    report.l_aug /= static_cast<double>(batches.size());
    report.l_lm /= static_cast<double>(batches.size());
    report.val_accuracy = evaluate(val_set, model);
    report.seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    result.reports.push_back(report);
    if (report.val_accuracy > result.best_accuracy) {
      result.best_accuracy = report.val_accuracy;
      result.best_epoch = report.epoch;
      result.best = model.clone();
    }
  }
  return result;
}

int predict_class(const Example& ex, const Model& model) {
  NoGradGuard no_grad;
  Tensor emb = encode(ex, model, false);
  Tensor logits = classify(emb, model.cls);
  int best = 0;
  for (std::size_t c = 1; c < logits.numel(); ++c)
    if (logits.values()[c] > logits.values()[best]) best = static_cast<int>(c);
  return best;
}

double evaluate(const LabeledDataset& data, const Model& model) {
  if (data.examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  for (const Example& ex : data.examples)
    if (predict_class(ex, model) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace decra
