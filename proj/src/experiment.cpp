#include "decra/experiment.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace decra {

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double population_stddev(const std::vector<double>& xs) {
  double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["accuracies"] = accuracies;
  j["best_epochs"] = best_epochs;
  j["mean"] = mean;
  j["stddev"] = stddev;  // population formula over subsets
  j["train_indices"] = train_indices;
  j["val_indices"] = val_indices;
  return j.dump(2);
}

ModelConfig fit_config(ModelConfig cfg, const LabeledDataset& data) {
  cfg.vocab_size = data.vocab->size();
  cfg.max_len = data.max_len;
  cfg.num_classes = data.num_classes;
  cfg.validate();
  return cfg;
}

namespace {

struct SubsetOutcome {
  double accuracy = 0.0;
  std::size_t best_epoch = 0;
};

SubsetOutcome run_one_subset(const SubsetPair& pair,
                             const LabeledDataset& test_set,
                             const TrainConfig& base_cfg,
                             const ModelConfig& model_cfg, std::size_t index) {
  TrainConfig cfg = base_cfg;
  cfg.seed = derive_seed(base_cfg.seed, Stream::sample, {index});
  Model model = init_model(model_cfg, cfg.seed);
  TrainResult result = train(pair.train, pair.val, model, cfg);
  SubsetOutcome out;
  out.accuracy = evaluate(test_set, result.best);
  out.best_epoch = result.best_epoch;
  return out;
}

}  // namespace

ExperimentReport run_on_subsets(const std::vector<SubsetPair>& subsets,
                                const LabeledDataset& test_set,
                                const TrainConfig& train_cfg,
                                const ModelConfig& model_cfg,
                                std::size_t jobs) {
  if (subsets.empty()) throw std::invalid_argument("run_on_subsets: no subsets");
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, subsets.size());

  std::vector<SubsetOutcome> outcomes(subsets.size());
  std::vector<std::string> failures(subsets.size());
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&, w]() {
      for (std::size_t i = w; i < subsets.size(); i += jobs) {
        try {
          outcomes[i] =
              run_one_subset(subsets[i], test_set, train_cfg, model_cfg, i);
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      }
    }));
  }
  for (auto& f : workers) f.get();
  for (std::size_t i = 0; i < failures.size(); ++i)
    if (!failures[i].empty())
      throw std::runtime_error("subset " + std::to_string(i) +
                               " failed: " + failures[i]);

  ExperimentReport report;
  report.mode = mode_name(train_cfg.mode);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    report.accuracies.push_back(outcomes[i].accuracy);
    report.best_epochs.push_back(outcomes[i].best_epoch);
    report.train_indices.push_back(subsets[i].train_indices);
    report.val_indices.push_back(subsets[i].val_indices);
  }
  report.mean = mean_of(report.accuracies);
  report.stddev = population_stddev(report.accuracies);
  return report;
}

ExperimentReport run_experiment(const LabeledDataset& data,
                                const LabeledDataset& test_set,
                                const SubsetSpec& spec,
                                const TrainConfig& train_cfg,
                                const ModelConfig& model_cfg,
                                std::size_t jobs) {
  auto subsets = sample_subsets(data, spec);
  return run_on_subsets(subsets, test_set, train_cfg,
                        fit_config(model_cfg, data), jobs);
}

std::vector<std::pair<std::string, ExperimentReport>> run_ablation(
    const LabeledDataset& data, const LabeledDataset& test_set,
    const SubsetSpec& spec, const TrainConfig& base_cfg,
    const ModelConfig& model_cfg, std::size_t jobs) {
  auto subsets = sample_subsets(data, spec);
  ModelConfig mcfg = fit_config(model_cfg, data);
  static const TrainMode kGrid[] = {
      TrainMode::baseline,   TrainMode::reg_only,       TrainMode::aug_only,
      TrainMode::staged_reg, TrainMode::staged_reg_aug, TrainMode::full};
  std::vector<std::pair<std::string, ExperimentReport>> out;
  for (TrainMode mode : kGrid) {
    TrainConfig cfg = base_cfg;
    cfg.mode = mode;
    out.emplace_back(mode_name(mode),
                     run_on_subsets(subsets, test_set, cfg, mcfg, jobs));
  }
  return out;
}

std::vector<std::pair<double, ExperimentReport>> run_sweep(
    const SweepSpec& spec, const LabeledDataset& data,
    const LabeledDataset& test_set, const SubsetSpec& subset_spec,
    const ModelConfig& model_cfg, std::size_t jobs) {
  std::vector<std::pair<double, ExperimentReport>> out;
  for (double value : spec.values) {
    TrainConfig cfg = spec.base;
    if (spec.parameter == "k") {
      cfg.k = static_cast<std::size_t>(value);
    } else if (spec.parameter == "beta") {
      cfg.beta = static_cast<std::size_t>(value);
    } else if (spec.parameter == "lambda_a") {
      cfg.lambda_a = value;
    } else if (spec.parameter == "lambda_lm") {
      cfg.lambda_lm = value;
    } else {
      throw std::invalid_argument("run_sweep: unknown parameter " +
                                  spec.parameter);
    }
    out.emplace_back(value, run_experiment(data, test_set, subset_spec, cfg,
                                           model_cfg, jobs));
  }
  return out;
}

void export_augmentations(const LabeledDataset& data, const Model& model,
                          const AugmentConfig& aug_cfg,
                          const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out)
    throw std::runtime_error("export_augmentations: cannot open " + out_path);
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    auto runs = kbeta_augment(data.examples[i], i, model, aug_cfg);
    for (const SoftSequence& seq : runs) {
      Rng rng(derive_seed(aug_cfg.seed, Stream::sample, {i, seq.run_index}));
      Example hard = sample_hard(seq, rng);
      nlohmann::json soft_rows = nlohmann::json::array();
      for (std::size_t t : seq.masked_positions) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [id, p] : seq.rows[t])
          entries.push_back({data.vocab->id_to_token.at(
                                 static_cast<std::size_t>(id)),
                             p});
        soft_rows.push_back({t, entries});
      }
      nlohmann::json line{{"source_index", seq.source_index},
                          {"run_index", seq.run_index},
                          {"label", data.label_names.at(
                               static_cast<std::size_t>(seq.label))},
                          {"text", decode(hard, *data.vocab)},
                          {"soft_rows", soft_rows}};
      out << line.dump() << "\n";
    }
  }
  if (!out)
    throw std::runtime_error("export_augmentations: write failed: " + out_path);
}

void export_embeddings(const LabeledDataset& data, const Model& model,
                       const AugmentConfig& aug_cfg,
                       const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out)
    throw std::runtime_error("export_embeddings: cannot open " + out_path);
  NoGradGuard no_grad;
  std::size_t H = model.config.hidden;
  out << "kind\tlabel";
  for (std::size_t c = 0; c < H; ++c) out << "\tv" << c;
  out << "\n";
  out.precision(17);
  auto write_row = [&](const char* kind, int label, const Tensor& emb) {
    out << kind << "\t" << label;
    for (std::size_t c = 0; c < H; ++c) out << "\t" << emb.values()[c];
    out << "\n";
  };
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const Example& ex = data.examples[i];
    Tensor emb = encode(ex, model, false);
    write_row("original", ex.label, select_rows(emb, {0}));
    for (const SoftSequence& seq : kbeta_augment(ex, i, model, aug_cfg)) {
      Tensor gen = encode(seq, model, false);
      write_row("generated", seq.label, select_rows(gen, {0}));
    }
  }
  if (!out)
    throw std::runtime_error("export_embeddings: write failed: " + out_path);
}

void gen_synthetic_jsonl(const SynthSpec& spec, const std::string& path) {
  if (spec.num_classes == 0 || spec.per_class == 0 ||
      spec.keywords_per_class == 0 || spec.min_len == 0 ||
      spec.max_len < spec.min_len)
    throw std::invalid_argument("gen_synthetic_jsonl: bad spec");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("gen_synthetic_jsonl: cannot open " + path);
  Rng rng(derive_seed(spec.seed, Stream::synth));
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      std::size_t len =
          spec.min_len + rng.uniform_int(spec.max_len - spec.min_len + 1);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        if (!text.empty()) text.push_back(' ');
        if (rng.bernoulli(spec.keyword_prob)) {
          text += "k" + std::to_string(c) + "x" +
                  std::to_string(rng.uniform_int(spec.keywords_per_class));
        } else {
          text += "dx" + std::to_string(rng.uniform_int(spec.distractors));
        }
      }
      nlohmann::json line{{"text", text},
                          {"label", "class" + std::to_string(c)}};
      out << line.dump() << "\n";
    }
  }
}

std::uint64_t content_hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("content_hash_file: cannot open " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (!in) break;
  }
  return h;
}

void write_epoch_csv(const std::vector<EpochReport>& reports,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_epoch_csv: cannot open " + path);
  out << "epoch,l_ce,l_aug,l_lm,val_acc,seconds\n";
  out.precision(17);
  for (const EpochReport& r : reports)
    out << r.epoch << "," << r.l_ce << "," << r.l_aug << "," << r.l_lm << ","
        << r.val_accuracy << "," << r.seconds << "\n";
}

}  // namespace decra
