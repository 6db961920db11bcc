#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decra/adam.hpp"
#include "decra/kbeta.hpp"
#include "decra/model.hpp"

namespace decra {

// Ablation grid: which loss terms are active, and whether a masked-LM
// pretraining stage runs before classification training.
enum class TrainMode {
  baseline,        // L_CE
  reg_only,        // L_CE + lambda_lm * L_LM
  aug_only,        // L_CE + lambda_a * L_aug
  staged_reg,      // LM pretrain, then L_CE
  staged_reg_aug,  // LM pretrain, then L_CE + lambda_a * L_aug
  full,            // L_CE + lambda_a * L_aug + lambda_lm * L_LM
};

TrainMode parse_mode(const std::string& name);
std::string mode_name(TrainMode mode);
bool mode_uses_aug(TrainMode mode);
bool mode_uses_lm(TrainMode mode);
bool mode_pretrains(TrainMode mode);

struct TrainConfig {
  double lambda_a = 1.0;
  double lambda_lm = 1.5;
  std::size_t k = 2;
  std::size_t beta = 18;
  double p_mask = 0.15;
  double temperature = 1.0;
  double learning_rate = 3e-4;  // random-init default; 2e-5 for fine-tuning
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::size_t pretrain_epochs = 30;
  TrainMode mode = TrainMode::full;
  std::uint64_t seed = 0;

  void validate() const;
  AugmentConfig augment_config(std::uint64_t stream_seed) const;
};

struct EpochReport {
  std::size_t epoch = 0;
  double l_ce = 0.0;
  double l_aug = 0.0;
  double l_lm = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model best;
  std::vector<EpochReport> reports;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epochs ran
  double best_accuracy = 0.0;
};

// ---- loss terms (each builds one scalar on the tape) ----

Tensor classification_loss(const std::vector<Example>& batch,
                           const Model& model, bool train_mode = false,
                           Rng* dropout_rng = nullptr);

// Masked LM loss: per example, mean NLL of the original tokens at
// the masked positions of the corrupted input; then mean over the batch.
Tensor masked_lm_loss(const std::vector<Example>& batch,
                      const std::vector<MaskSet>& masks, const Model& model,
                      bool train_mode = false, Rng* dropout_rng = nullptr);

// Classification loss over precomputed soft sequences: per example the mean
// over its beta runs, then mean over the batch.
Tensor augmented_loss_from(const std::vector<std::vector<SoftSequence>>& augs,
                           std::size_t num_classes, const Model& model,
                           bool train_mode = false, Rng* dropout_rng = nullptr);

// Draws the beta augmentations internally (kbeta streams keyed by
// example_indices) and evaluates augmented_loss_from.
Tensor augmented_loss(const std::vector<Example>& batch,
                      const std::vector<std::size_t>& example_indices,
                      const Model& model, const AugmentConfig& aug_cfg,
                      bool train_mode = false, Rng* dropout_rng = nullptr);

struct LossTerms {
  Tensor total;
  double l_ce = 0.0;
  double l_aug = 0.0;
  double l_lm = 0.0;
  bool aug_active = false;
  bool lm_active = false;
};

// Weighted combination per the active mode. Regularization masks and
// augmentation masks come from independent streams keyed by
// (cfg.seed, epoch, example index).
LossTerms final_loss(const std::vector<Example>& batch,
                     const std::vector<std::size_t>& example_indices,
                     const Model& model, const TrainConfig& cfg,
                     std::size_t epoch, bool train_mode = false,
                     Rng* dropout_rng = nullptr);

// Masked-LM-only optimization over the dataset text.
void pretrain_lm(const LabeledDataset& data, Model& model, std::size_t epochs,
                 const TrainConfig& cfg);

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& val_set,
                  Model& model, const TrainConfig& cfg);

double evaluate(const LabeledDataset& data, const Model& model);
int predict_class(const Example& ex, const Model& model);

}  // namespace decra
