#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "decra/dataset.hpp"
#include "decra/training.hpp"

namespace decra {

// Per-subset test accuracies with the aggregate the protocol reports.
// stddev is the population standard deviation over subsets: the sampled
// subsets are the whole evaluation population.
struct ExperimentReport {
  std::string mode;
  std::vector<double> accuracies;          // one per subset
  std::vector<std::size_t> best_epochs;    // 1-based
  std::vector<std::vector<std::size_t>> train_indices;  // subset manifests
  std::vector<std::vector<std::size_t>> val_indices;
  double mean = 0.0;
  double stddev = 0.0;

  std::string to_json() const;
};

double mean_of(const std::vector<double>& xs);
double population_stddev(const std::vector<double>& xs);

// Trains one fresh model per subset (per-subset derived seed), evaluates
// each best checkpoint on the full test set. Subsets run in parallel when
// jobs > 1; results are identical to a serial run.
ExperimentReport run_on_subsets(const std::vector<SubsetPair>& subsets,
                                const LabeledDataset& test_set,
                                const TrainConfig& train_cfg,
                                const ModelConfig& model_cfg,
                                std::size_t jobs = 0);

ExperimentReport run_experiment(const LabeledDataset& data,
                                const LabeledDataset& test_set,
                                const SubsetSpec& spec,
                                const TrainConfig& train_cfg,
                                const ModelConfig& model_cfg,
                                std::size_t jobs = 0);

// The six-mode ablation grid over one shared subset sample, so per-subset
// comparisons between modes are paired.
std::vector<std::pair<std::string, ExperimentReport>> run_ablation(
    const LabeledDataset& data, const LabeledDataset& test_set,
    const SubsetSpec& spec, const TrainConfig& base_cfg,
    const ModelConfig& model_cfg, std::size_t jobs = 0);

struct SweepSpec {
  std::string parameter;  // k | beta | lambda_a | lambda_lm
  std::vector<double> values;
  TrainConfig base;
};

std::vector<std::pair<double, ExperimentReport>> run_sweep(
    const SweepSpec& spec, const LabeledDataset& data,
    const LabeledDataset& test_set, const SubsetSpec& subset_spec,
    const ModelConfig& model_cfg, std::size_t jobs = 0);

// JSONL export of every generated sequence: source_index, run_index, label,
// hard-sampled text, and the masked positions' sparse rows.
void export_augmentations(const LabeledDataset& data, const Model& model,
                          const AugmentConfig& aug_cfg,
                          const std::string& out_path);

// TSV of CLS embeddings for originals and their beta generated sequences:
// kind, label, then H vector columns.
void export_embeddings(const LabeledDataset& data, const Model& model,
                       const AugmentConfig& aug_cfg,
                       const std::string& out_path);

// Class-keyword template corpus so the whole pipeline runs with no
// external inputs.
struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t per_class = 500;
  std::size_t keywords_per_class = 30;
  std::size_t distractors = 60;
  std::size_t min_len = 8;
  std::size_t max_len = 14;
  double keyword_prob = 0.5;
  std::uint64_t seed = 0;
};

void gen_synthetic_jsonl(const SynthSpec& spec, const std::string& path);

// FNV-1a content hash used in run manifests.
std::uint64_t content_hash_file(const std::string& path);

void write_epoch_csv(const std::vector<EpochReport>& reports,
                     const std::string& path);

// Fits the model config to a dataset (V, T, C taken from the data).
ModelConfig fit_config(ModelConfig cfg, const LabeledDataset& data);

}  // namespace decra
