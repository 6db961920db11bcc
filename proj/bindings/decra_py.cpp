#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "decra/experiment.hpp"

namespace py = pybind11;
using namespace decra;

PYBIND11_MODULE(_decra, m) {
  m.doc() = "Low-resource text classification with k-beta augmentation";

  py::class_<Vocabulary, std::shared_ptr<Vocabulary>>(m, "Vocabulary")
      .def_readonly("id_to_token", &Vocabulary::id_to_token)
      .def("lookup", &Vocabulary::lookup)
      .def("__len__", &Vocabulary::size)
      .def_readonly_static("PAD", &Vocabulary::kPad)
      .def_readonly_static("MASK", &Vocabulary::kMask)
      .def_readonly_static("CLS", &Vocabulary::kCls)
      .def_readonly_static("UNK", &Vocabulary::kUnk);

  py::class_<Example>(m, "Example")
      .def(py::init<>())
      .def_readwrite("token_ids", &Example::token_ids)
      .def_readwrite("label", &Example::label);

  py::class_<SoftSequence>(m, "SoftSequence")
      .def_readonly("rows", &SoftSequence::rows)
      .def_readonly("label", &SoftSequence::label)
      .def_readonly("source_index", &SoftSequence::source_index)
      .def_readonly("run_index", &SoftSequence::run_index)
      .def_readonly("masked_positions", &SoftSequence::masked_positions);

  py::class_<LabeledDataset>(m, "LabeledDataset")
      .def_readonly("examples", &LabeledDataset::examples)
      .def_readonly("num_classes", &LabeledDataset::num_classes)
      .def_readonly("max_len", &LabeledDataset::max_len)
      .def_readonly("vocab", &LabeledDataset::vocab)
      .def_readonly("label_names", &LabeledDataset::label_names)
      .def("__len__", &LabeledDataset::size);

  py::class_<SubsetSpec>(m, "SubsetSpec")
      .def(py::init<>())
      .def_readwrite("num_subsets", &SubsetSpec::num_subsets)
      .def_readwrite("train_per_class", &SubsetSpec::train_per_class)
      .def_readwrite("val_per_class", &SubsetSpec::val_per_class)
      .def_readwrite("seed", &SubsetSpec::seed);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_len", &ModelConfig::max_len)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("ff_multiplier", &ModelConfig::ff_multiplier)
      .def_readwrite("dropout_rate", &ModelConfig::dropout_rate);

  py::class_<Model>(m, "Model")
      .def_readonly("config", &Model::config)
      .def("clone", &Model::clone);

  py::enum_<TrainMode>(m, "TrainMode")
      .value("baseline", TrainMode::baseline)
      .value("reg_only", TrainMode::reg_only)
      .value("aug_only", TrainMode::aug_only)
      .value("staged_reg", TrainMode::staged_reg)
      .value("staged_reg_aug", TrainMode::staged_reg_aug)
      .value("full", TrainMode::full);

  py::class_<AugmentConfig>(m, "AugmentConfig")
      .def(py::init<>())
      .def_readwrite("k", &AugmentConfig::k)
      .def_readwrite("beta", &AugmentConfig::beta)
      .def_readwrite("p_mask", &AugmentConfig::p_mask)
      .def_readwrite("temperature", &AugmentConfig::temperature)
      .def_readwrite("seed", &AugmentConfig::seed);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_a", &TrainConfig::lambda_a)
      .def_readwrite("lambda_lm", &TrainConfig::lambda_lm)
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("p_mask", &TrainConfig::p_mask)
      .def_readwrite("temperature", &TrainConfig::temperature)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("pretrain_epochs", &TrainConfig::pretrain_epochs)
      .def_readwrite("mode", &TrainConfig::mode)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<EpochReport>(m, "EpochReport")
      .def_readonly("epoch", &EpochReport::epoch)
      .def_readonly("l_ce", &EpochReport::l_ce)
      .def_readonly("l_aug", &EpochReport::l_aug)
      .def_readonly("l_lm", &EpochReport::l_lm)
      .def_readonly("val_accuracy", &EpochReport::val_accuracy)
      .def_readonly("seconds", &EpochReport::seconds);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("best", &TrainResult::best)
      .def_readonly("reports", &TrainResult::reports)
      .def_readonly("best_epoch", &TrainResult::best_epoch)
      .def_readonly("best_accuracy", &TrainResult::best_accuracy);

  py::class_<ExperimentReport>(m, "ExperimentReport")
      .def_readonly("mode", &ExperimentReport::mode)
      .def_readonly("accuracies", &ExperimentReport::accuracies)
      .def_readonly("best_epochs", &ExperimentReport::best_epochs)
      .def_readonly("train_indices", &ExperimentReport::train_indices)
      .def_readonly("val_indices", &ExperimentReport::val_indices)
      .def_readonly("mean", &ExperimentReport::mean)
      .def_readonly("stddev", &ExperimentReport::stddev)
      .def("to_json", &ExperimentReport::to_json);

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &SynthSpec::num_classes)
      .def_readwrite("per_class", &SynthSpec::per_class)
      .def_readwrite("keywords_per_class", &SynthSpec::keywords_per_class)
      .def_readwrite("distractors", &SynthSpec::distractors)
      .def_readwrite("min_len", &SynthSpec::min_len)
      .def_readwrite("max_len", &SynthSpec::max_len)
      .def_readwrite("keyword_prob", &SynthSpec::keyword_prob)
      .def_readwrite("seed", &SynthSpec::seed);

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("load_jsonl", &load_jsonl, py::arg("path"), py::arg("vocab") = nullptr,
        py::arg("max_len") = 32, py::arg("num_classes") = 0,
        py::arg("max_vocab") = 2000);
  m.def("encode",
        py::overload_cast<const std::string&, const Vocabulary&, std::size_t>(
            &encode),
        py::arg("text"), py::arg("vocab"), py::arg("max_len"));
  m.def("decode", &decode, py::arg("example"), py::arg("vocab"));

  m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));
  m.def("fit_config", &fit_config, py::arg("config"), py::arg("data"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def("kbeta_augment", &kbeta_augment, py::arg("example"),
        py::arg("example_index"), py::arg("model"), py::arg("config"));
  m.def("topk_renormalize", &topk_renormalize, py::arg("logits"), py::arg("k"),
        py::arg("temperature") = 1.0);

  m.def(
      "train",
      [](const LabeledDataset& train_set, const LabeledDataset& val_set,
         Model& model, const TrainConfig& cfg) {
        return train(train_set, val_set, model, cfg);
      },
      py::arg("train_set"), py::arg("val_set"), py::arg("model"),
      py::arg("config"));
  m.def(
      "pretrain_lm",
      [](const LabeledDataset& data, Model& model, std::size_t epochs,
         const TrainConfig& cfg) { pretrain_lm(data, model, epochs, cfg); },
      py::arg("data"), py::arg("model"), py::arg("epochs"), py::arg("config"));
  m.def("evaluate", &evaluate, py::arg("data"), py::arg("model"));
  m.def("predict_class", &predict_class, py::arg("example"), py::arg("model"));

  m.def("sample_subsets", &sample_subsets, py::arg("data"), py::arg("spec"));
  m.def("run_experiment", &run_experiment, py::arg("data"), py::arg("test_set"),
        py::arg("subsets"), py::arg("train_config"), py::arg("model_config"),
        py::arg("jobs") = 0);
  m.def("run_ablation", &run_ablation, py::arg("data"), py::arg("test_set"),
        py::arg("subsets"), py::arg("train_config"), py::arg("model_config"),
        py::arg("jobs") = 0);

  m.def("gen_synthetic_jsonl", &gen_synthetic_jsonl, py::arg("spec"),
        py::arg("path"));
  m.def("export_augmentations", &export_augmentations, py::arg("data"),
        py::arg("model"), py::arg("config"), py::arg("path"));
  m.def("export_embeddings", &export_embeddings, py::arg("data"),
        py::arg("model"), py::arg("config"), py::arg("path"));
}
