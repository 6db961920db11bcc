#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decra/dataset.hpp"
#include "decra/tensor.hpp"

namespace decra {

struct ModelConfig {
  std::size_t vocab_size = 2000;  // V
  std::size_t max_len = 32;       // T
  std::size_t num_classes = 2;    // C
  std::size_t hidden = 64;        // H
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ff_multiplier = 4;
  double dropout_rate = 0.1;
  std::string activation = "gelu";  // or "relu"
  std::string tokenizer = "whitespace_lower";
  bool tie_lm_embeddings = false;  // kept as a flag, default off

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
  Tensor tok_emb;  // V x H
  Tensor pos_emb;  // T x H
  Tensor emb_ln_gain, emb_ln_bias;
  std::vector<LayerParams> layers;
};

struct LMHead {
  Tensor w;  // H x V
  Tensor b;  // V
};

struct ClsHead {
  Tensor w;  // H x C
  Tensor b;  // C
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  LMHead lm;
  ClsHead cls;

  // Fixed order; checkpoint blocks and Adam state follow it.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void zero_grad() const;
  Model clone() const;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

// Encoder forward for hard token ids or a soft sequence. PAD key positions
// are excluded from attention; dropout only when train_mode and rng given.
Tensor encode(const Example& ex, const Model& model, bool train_mode = false,
              Rng* dropout_rng = nullptr);
Tensor encode(const SoftSequence& seq, const Model& model,
              bool train_mode = false, Rng* dropout_rng = nullptr);

// T x V logits, no softmax.
Tensor lm_predict(const Tensor& embeddings, const LMHead& head);
// 1 x C logits from the CLS (position 0) embedding.
Tensor classify(const Tensor& embeddings, const ClsHead& head);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace decra
