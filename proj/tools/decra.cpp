// decra: low-resource text classification with k-beta augmentation and
// masked-LM regularization. Subcommands cover data generation, training,
// the subset experiment protocol, the ablation grid, hyperparameter
// sweeps, and augmentation/embedding exports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "decra/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  decra::ModelConfig model;
  decra::TrainConfig train;
  decra::SubsetSpec subsets;
  std::string mode = "full";
  std::size_t max_vocab = 2000;
  std::size_t jobs = 0;
};

json model_json(const decra::ModelConfig& m) {
  return json::parse(m.to_json());
}

json train_json(const decra::TrainConfig& t) {
  return json{{"lambda_a", t.lambda_a},
              {"lambda_lm", t.lambda_lm},
              {"k", t.k},
              {"beta", t.beta},
              {"p_mask", t.p_mask},
              {"temperature", t.temperature},
              {"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"pretrain_epochs", t.pretrain_epochs},
              {"mode", decra::mode_name(t.mode)},
              {"seed", t.seed}};
}

json subset_json(const decra::SubsetSpec& s) {
  return json{{"num_subsets", s.num_subsets},
              {"train_per_class", s.train_per_class},
              {"val_per_class", s.val_per_class},
              {"seed", s.seed}};
}

void apply_config_file(CommonOptions& opt, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  in >> j;
  if (j.contains("model")) {
    json m = model_json(opt.model);
    m.update(j["model"]);
    opt.model = decra::ModelConfig::from_json(m.dump());
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    auto& tc = opt.train;
    tc.lambda_a = t.value("lambda_a", tc.lambda_a);
    tc.lambda_lm = t.value("lambda_lm", tc.lambda_lm);
    tc.k = t.value("k", tc.k);
    tc.beta = t.value("beta", tc.beta);
    tc.p_mask = t.value("p_mask", tc.p_mask);
    tc.temperature = t.value("temperature", tc.temperature);
    tc.learning_rate = t.value("learning_rate", tc.learning_rate);
    tc.epochs = t.value("epochs", tc.epochs);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.pretrain_epochs = t.value("pretrain_epochs", tc.pretrain_epochs);
    tc.seed = t.value("seed", tc.seed);
    if (t.contains("mode")) opt.mode = t["mode"].get<std::string>();
  }
  if (j.contains("subsets")) {
    const json& s = j["subsets"];
    opt.subsets.num_subsets = s.value("num_subsets", opt.subsets.num_subsets);
    opt.subsets.train_per_class =
        s.value("train_per_class", opt.subsets.train_per_class);
    opt.subsets.val_per_class =
        s.value("val_per_class", opt.subsets.val_per_class);
    opt.subsets.seed = s.value("seed", opt.subsets.seed);
  }
  if (j.contains("max_vocab")) opt.max_vocab = j["max_vocab"].get<std::size_t>();
}

void add_common_flags(CLI::App* cmd, CommonOptions& opt, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON config file with defaults");
  cmd->add_option("--hidden", opt.model.hidden, "Hidden size H");
  cmd->add_option("--layers", opt.model.num_layers, "Encoder layers");
  cmd->add_option("--heads", opt.model.num_heads, "Attention heads");
  cmd->add_option("--ff-multiplier", opt.model.ff_multiplier, "Feed-forward width multiplier");
  cmd->add_option("--dropout", opt.model.dropout_rate, "Dropout rate");
  cmd->add_option("--activation", opt.model.activation, "gelu or relu");
  cmd->add_option("--max-len", opt.model.max_len, "Sequence length T");
  cmd->add_option("--max-vocab", opt.max_vocab, "Vocabulary budget");
  cmd->add_option("--mode", opt.mode, "baseline|reg_only|aug_only|staged_reg|staged_reg_aug|full");
  cmd->add_option("--epochs", opt.train.epochs, "Training epochs");
  cmd->add_option("--pretrain-epochs", opt.train.pretrain_epochs, "LM pretraining epochs (staged modes)");
  cmd->add_option("--batch-size", opt.train.batch_size, "Batch size");
  cmd->add_option("--lr", opt.train.learning_rate, "Learning rate");
  cmd->add_option("--lambda-a", opt.train.lambda_a, "Weight of augmented loss");
  cmd->add_option("--lambda-lm", opt.train.lambda_lm, "Weight of masked-LM loss");
  cmd->add_option("--k", opt.train.k, "Top-k size");
  cmd->add_option("--beta", opt.train.beta, "Augmentation runs per example");
  cmd->add_option("--p-mask", opt.train.p_mask, "Masking probability");
  cmd->add_option("--temperature", opt.train.temperature, "Top-k softmax temperature");
  cmd->add_option("--seed", opt.train.seed, "Master seed");
  cmd->add_option("--subsets", opt.subsets.num_subsets, "Number of low-resource subsets");
  cmd->add_option("--train-per-class", opt.subsets.train_per_class, "Training examples per class per subset");
  cmd->add_option("--val-per-class", opt.subsets.val_per_class, "Validation examples per class per subset");
  cmd->add_option("--jobs", opt.jobs, "Parallel subset workers (0 = auto)");
}

// Flags were parsed before the config file is read, so re-apply config as
// the base and let explicitly passed flags win.
void finalize(CLI::App* cmd, CommonOptions& opt, const std::string& config_path) {
  if (!config_path.empty()) {
    CommonOptions base;
    apply_config_file(base, config_path);
    // copy config values for options the user did not pass on the CLI
    auto keep = [&](const char* flag) { return cmd->count(flag) > 0; };
    CommonOptions merged = base;
    if (keep("--hidden")) merged.model.hidden = opt.model.hidden;
    if (keep("--layers")) merged.model.num_layers = opt.model.num_layers;
    if (keep("--heads")) merged.model.num_heads = opt.model.num_heads;
    if (keep("--ff-multiplier")) merged.model.ff_multiplier = opt.model.ff_multiplier;
    if (keep("--dropout")) merged.model.dropout_rate = opt.model.dropout_rate;
    if (keep("--activation")) merged.model.activation = opt.model.activation;
    if (keep("--max-len")) merged.model.max_len = opt.model.max_len;
    if (keep("--max-vocab")) merged.max_vocab = opt.max_vocab;
    if (keep("--mode")) merged.mode = opt.mode;
    if (keep("--epochs")) merged.train.epochs = opt.train.epochs;
    if (keep("--pretrain-epochs")) merged.train.pretrain_epochs = opt.train.pretrain_epochs;
    if (keep("--batch-size")) merged.train.batch_size = opt.train.batch_size;
    if (keep("--lr")) merged.train.learning_rate = opt.train.learning_rate;
    if (keep("--lambda-a")) merged.train.lambda_a = opt.train.lambda_a;
    if (keep("--lambda-lm")) merged.train.lambda_lm = opt.train.lambda_lm;
    if (keep("--k")) merged.train.k = opt.train.k;
    if (keep("--beta")) merged.train.beta = opt.train.beta;
    if (keep("--p-mask")) merged.train.p_mask = opt.train.p_mask;
    if (keep("--temperature")) merged.train.temperature = opt.train.temperature;
    if (keep("--seed")) merged.train.seed = opt.train.seed;
    if (keep("--subsets")) merged.subsets.num_subsets = opt.subsets.num_subsets;
    if (keep("--train-per-class")) merged.subsets.train_per_class = opt.subsets.train_per_class;
    if (keep("--val-per-class")) merged.subsets.val_per_class = opt.subsets.val_per_class;
    if (keep("--jobs")) merged.jobs = opt.jobs;
    opt = merged;
  }
  opt.train.mode = decra::parse_mode(opt.mode);
  opt.subsets.seed = opt.train.seed;
}

void write_manifest(const std::string& path, const std::string& command,
                    const CommonOptions& opt,
                    const std::vector<std::string>& inputs) {
  json m;
  m["command"] = command;
  m["model"] = model_json(opt.model);
  m["train"] = train_json(opt.train);
  m["subsets"] = subset_json(opt.subsets);
  m["input_hashes"] = json::object();
  for (const std::string& p : inputs) {
    std::ostringstream h;
    h << std::hex << decra::content_hash_file(p);
    m["input_hashes"][p] = h.str();
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << m.dump(2) << "\n";
}

decra::AugmentConfig aug_from(const CommonOptions& opt) {
  decra::AugmentConfig a;
  a.k = opt.train.k;
  a.beta = opt.train.beta;
  a.p_mask = opt.train.p_mask;
  a.temperature = opt.train.temperature;
  a.seed = opt.train.seed;
  return a;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw std::runtime_error("--values is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DECRA low-resource text classification"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::string config_path;
  std::string data_path, val_path, test_path, out_dir = ".", out_path;
  std::string checkpoint_path, vocab_path;
  decra::SynthSpec synth;
  std::string sweep_param;
  std::string sweep_values;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic keyword-template corpus");
  gen->add_option("--out", out_path, "Output JSONL path")->required();
  gen->add_option("--classes", synth.num_classes, "Number of classes");
  gen->add_option("--per-class", synth.per_class, "Examples per class");
  gen->add_option("--keywords-per-class", synth.keywords_per_class, "Class keyword pool size");
  gen->add_option("--distractors", synth.distractors, "Shared distractor pool size");
  gen->add_option("--min-len", synth.min_len, "Minimum sentence length");
  gen->add_option("--max-len", synth.max_len, "Maximum sentence length");
  gen->add_option("--keyword-prob", synth.keyword_prob, "Per-token keyword probability");
  gen->add_option("--seed", synth.seed, "Generator seed");

  auto* pretrain = app.add_subcommand("pretrain", "Masked-LM pretraining on a JSONL corpus");
  pretrain->add_option("--data", data_path, "Training JSONL")->required();
  pretrain->add_option("--out-dir", out_dir, "Output directory");
  add_common_flags(pretrain, opt, config_path);

  auto* train_cmd = app.add_subcommand("train", "Train one model on one split");
  train_cmd->add_option("--data", data_path, "Training JSONL")->required();
  train_cmd->add_option("--val", val_path, "Validation JSONL")->required();
  train_cmd->add_option("--test", test_path, "Optional test JSONL");
  train_cmd->add_option("--out-dir", out_dir, "Output directory");
  add_common_flags(train_cmd, opt, config_path);

  auto* exp = app.add_subcommand("experiment", "Subset protocol: train per subset, report mean/std");
  exp->add_option("--data", data_path, "Full training JSONL")->required();
  exp->add_option("--test", test_path, "Full test JSONL")->required();
  exp->add_option("--out-dir", out_dir, "Output directory");
  add_common_flags(exp, opt, config_path);

  auto* abl = app.add_subcommand("ablation", "Six-mode ablation grid over shared subsets");
  abl->add_option("--data", data_path, "Full training JSONL")->required();
  abl->add_option("--test", test_path, "Full test JSONL")->required();
  abl->add_option("--out-dir", out_dir, "Output directory");
  add_common_flags(abl, opt, config_path);

  auto* sweep = app.add_subcommand("sweep", "Hyperparameter sweep of repeated experiments");
  sweep->add_option("--data", data_path, "Full training JSONL")->required();
  sweep->add_option("--test", test_path, "Full test JSONL")->required();
  sweep->add_option("--param", sweep_param, "k|beta|lambda_a|lambda_lm")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep->add_option("--out-dir", out_dir, "Output directory");
  add_common_flags(sweep, opt, config_path);

  auto* aug = app.add_subcommand("augment", "Export k-beta augmentations as JSONL");
  aug->add_option("--data", data_path, "Input JSONL")->required();
  aug->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  aug->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();
  aug->add_option("--out", out_path, "Output JSONL")->required();
  add_common_flags(aug, opt, config_path);

  auto* emb = app.add_subcommand("export-embeddings", "Export CLS embeddings of originals and generated data");
  emb->add_option("--data", data_path, "Input JSONL")->required();
  emb->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  emb->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();
  emb->add_option("--out", out_path, "Output TSV")->required();
  add_common_flags(emb, opt, config_path);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL dataset");
  ev->add_option("--data", data_path, "Input JSONL")->required();
  ev->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  ev->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      decra::gen_synthetic_jsonl(synth, out_path);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }

    auto* active = app.get_subcommands().front();
    if (!ev->parsed()) finalize(active, opt, config_path);
    fs::create_directories(out_dir);

    if (pretrain->parsed()) {
      auto data = decra::load_jsonl(data_path, nullptr, opt.model.max_len, 0,
                                    opt.max_vocab);
      decra::ModelConfig mcfg = decra::fit_config(opt.model, data);
      decra::Model model = decra::init_model(mcfg, opt.train.seed);
      decra::pretrain_lm(data, model, opt.train.epochs, opt.train);
      decra::save_checkpoint(model, out_dir + "/model.ckpt");
      decra::save_vocab(*data.vocab, out_dir + "/vocab.json");
      write_manifest(out_dir + "/manifest.json", "pretrain", opt, {data_path});
      std::cout << "checkpoint: " << out_dir << "/model.ckpt\n";
    } else if (train_cmd->parsed()) {
      auto data = decra::load_jsonl(data_path, nullptr, opt.model.max_len, 0,
                                    opt.max_vocab);
      auto val = decra::load_jsonl(val_path, data.vocab, opt.model.max_len,
                                   data.num_classes);
      decra::ModelConfig mcfg = decra::fit_config(opt.model, data);
      decra::Model model = decra::init_model(mcfg, opt.train.seed);
      decra::TrainResult result = decra::train(data, val, model, opt.train);
      decra::save_checkpoint(result.best, out_dir + "/model.ckpt");
      decra::save_vocab(*data.vocab, out_dir + "/vocab.json");
      decra::write_epoch_csv(result.reports, out_dir + "/epochs.csv");
      std::vector<std::string> inputs{data_path, val_path};
      json summary{{"best_epoch", result.best_epoch},
                   {"best_val_accuracy", result.best_accuracy}};
      if (!test_path.empty()) {
        auto test = decra::load_jsonl(test_path, data.vocab, opt.model.max_len,
                                      data.num_classes);
        summary["test_accuracy"] = decra::evaluate(test, result.best);
        inputs.push_back(test_path);
      }
      write_manifest(out_dir + "/manifest.json", "train", opt, inputs);
      std::ofstream(out_dir + "/summary.json") << summary.dump(2) << "\n";
      std::cout << summary.dump(2) << "\n";
    } else if (exp->parsed()) {
      auto data = decra::load_jsonl(data_path, nullptr, opt.model.max_len, 0,
                                    opt.max_vocab);
      auto test = decra::load_jsonl(test_path, data.vocab, opt.model.max_len,
                                    data.num_classes);
      auto report = decra::run_experiment(data, test, opt.subsets, opt.train,
                                          opt.model, opt.jobs);
      std::ofstream(out_dir + "/report.json") << report.to_json() << "\n";
      write_manifest(out_dir + "/manifest.json", "experiment", opt,
                     {data_path, test_path});
      std::cout << "mean accuracy " << report.mean << " (std " << report.stddev
                << ", population) over " << report.accuracies.size()
                << " subsets\n";
    } else if (abl->parsed()) {
      auto data = decra::load_jsonl(data_path, nullptr, opt.model.max_len, 0,
                                    opt.max_vocab);
      auto test = decra::load_jsonl(test_path, data.vocab, opt.model.max_len,
                                    data.num_classes);
      auto results = decra::run_ablation(data, test, opt.subsets, opt.train,
                                         opt.model, opt.jobs);
      std::ofstream csv(out_dir + "/ablation.csv");
      csv << "mode,mean,std\n";
      csv.precision(17);
      for (const auto& [mode, report] : results) {
        std::ofstream(out_dir + "/report_" + mode + ".json")
            << report.to_json() << "\n";
        csv << mode << "," << report.mean << "," << report.stddev << "\n";
        std::cout << mode << ": " << report.mean << " (" << report.stddev
                  << ")\n";
      }
      write_manifest(out_dir + "/manifest.json", "ablation", opt,
                     {data_path, test_path});
    } else if (sweep->parsed()) {
      decra::SweepSpec spec;
      spec.parameter = sweep_param;
      spec.values = parse_values(sweep_values);
      spec.base = opt.train;
      auto data = decra::load_jsonl(data_path, nullptr, opt.model.max_len, 0,
                                    opt.max_vocab);
      auto test = decra::load_jsonl(test_path, data.vocab, opt.model.max_len,
                                    data.num_classes);
      auto rows = decra::run_sweep(spec, data, test, opt.subsets, opt.model,
                                   opt.jobs);
      std::ofstream csv(out_dir + "/sweep.csv");
      csv << "value,mean,std\n";
      csv.precision(17);
      for (const auto& [value, report] : rows) {
        csv << value << "," << report.mean << "," << report.stddev << "\n";
        std::cout << spec.parameter << "=" << value << ": " << report.mean
                  << " (" << report.stddev << ")\n";
      }
      write_manifest(out_dir + "/manifest.json", "sweep", opt,
                     {data_path, test_path});
    } else if (aug->parsed() || emb->parsed()) {
      auto vocab = std::make_shared<decra::Vocabulary>(decra::load_vocab(vocab_path));
      decra::Model model = decra::load_checkpoint(checkpoint_path);
      auto data = decra::load_jsonl(data_path, vocab, model.config.max_len, 0);
      decra::AugmentConfig acfg = aug_from(opt);
      if (aug->parsed())
        decra::export_augmentations(data, model, acfg, out_path);
      else
        decra::export_embeddings(data, model, acfg, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (ev->parsed()) {
      auto vocab = std::make_shared<decra::Vocabulary>(decra::load_vocab(vocab_path));
      decra::Model model = decra::load_checkpoint(checkpoint_path);
      auto data = decra::load_jsonl(data_path, vocab, model.config.max_len, 0);
      std::cout << json{{"accuracy", decra::evaluate(data, model)}}.dump()
                << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
