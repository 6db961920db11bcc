#include "decra/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace decra {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'C', 'R', 'A', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr double kAttnMaskValue = -1e9;
constexpr double kInitStd = 0.02;

static_assert(sizeof(double) == 8, "checkpoint format assumes 64-bit doubles");

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || max_len == 0 || num_classes == 0 || hidden == 0 ||
      num_layers == 0 || num_heads == 0 || ff_multiplier == 0)
    throw std::invalid_argument("ModelConfig: all sizes must be positive");
  if (hidden % num_heads != 0)
    throw std::invalid_argument("ModelConfig: hidden must divide by num_heads");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout_rate must be in [0,1)");
  if (activation != "gelu" && activation != "relu")
    throw std::invalid_argument("ModelConfig: unknown activation " + activation);
}

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"vocab_size", vocab_size},
                   {"max_len", max_len},
                   {"num_classes", num_classes},
                   {"hidden", hidden},
                   {"num_layers", num_layers},
                   {"num_heads", num_heads},
                   {"ff_multiplier", ff_multiplier},
                   {"dropout_rate", dropout_rate},
                   {"activation", activation},
                   {"tokenizer", tokenizer},
                   {"tie_lm_embeddings", tie_lm_embeddings}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ff_multiplier = j.at("ff_multiplier").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.activation = j.at("activation").get<std::string>();
  c.tokenizer = j.value("tokenizer", std::string("whitespace_lower"));
  c.tie_lm_embeddings = j.value("tie_lm_embeddings", false);
  c.validate();
  return c;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", encoder.tok_emb);
  out.emplace_back("pos_emb", encoder.pos_emb);
  out.emplace_back("emb_ln_gain", encoder.emb_ln_gain);
  out.emplace_back("emb_ln_bias", encoder.emb_ln_bias);
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    const LayerParams& lp = encoder.layers[l];
    std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "wq", lp.wq);
    out.emplace_back(p + "bq", lp.bq);
    out.emplace_back(p + "wk", lp.wk);
    out.emplace_back(p + "bk", lp.bk);
    out.emplace_back(p + "wv", lp.wv);
    out.emplace_back(p + "bv", lp.bv);
    out.emplace_back(p + "wo", lp.wo);
    out.emplace_back(p + "bo", lp.bo);
    out.emplace_back(p + "ln1_gain", lp.ln1_gain);
    out.emplace_back(p + "ln1_bias", lp.ln1_bias);
    out.emplace_back(p + "ff_w1", lp.ff_w1);
    out.emplace_back(p + "ff_b1", lp.ff_b1);
    out.emplace_back(p + "ff_w2", lp.ff_w2);
    out.emplace_back(p + "ff_b2", lp.ff_b2);
    out.emplace_back(p + "ln2_gain", lp.ln2_gain);
    out.emplace_back(p + "ln2_bias", lp.ln2_bias);
  }
  out.emplace_back("lm.w", lm.w);
  out.emplace_back("lm.b", lm.b);
  out.emplace_back("cls.w", cls.w);
  out.emplace_back("cls.b", cls.b);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Model::zero_grad() const {
  for (Tensor& t : parameters()) t.zero_grad();
}

Model Model::clone() const {
  Model m;
  m.config = config;
  m.encoder.tok_emb = encoder.tok_emb.clone_detached();
  m.encoder.pos_emb = encoder.pos_emb.clone_detached();
  m.encoder.emb_ln_gain = encoder.emb_ln_gain.clone_detached();
  m.encoder.emb_ln_bias = encoder.emb_ln_bias.clone_detached();
  for (const LayerParams& lp : encoder.layers) {
    LayerParams c;
    c.wq = lp.wq.clone_detached();
    c.bq = lp.bq.clone_detached();
    c.wk = lp.wk.clone_detached();
    c.bk = lp.bk.clone_detached();
    c.wv = lp.wv.clone_detached();
    c.bv = lp.bv.clone_detached();
    c.wo = lp.wo.clone_detached();
    c.bo = lp.bo.clone_detached();
    c.ln1_gain = lp.ln1_gain.clone_detached();
    c.ln1_bias = lp.ln1_bias.clone_detached();
    c.ff_w1 = lp.ff_w1.clone_detached();
    c.ff_b1 = lp.ff_b1.clone_detached();
    c.ff_w2 = lp.ff_w2.clone_detached();
    c.ff_b2 = lp.ff_b2.clone_detached();
    c.ln2_gain = lp.ln2_gain.clone_detached();
    c.ln2_bias = lp.ln2_bias.clone_detached();
    m.encoder.layers.push_back(std::move(c));
  }
  m.lm.w = lm.w.clone_detached();
  m.lm.b = lm.b.clone_detached();
  m.cls.w = cls.w.clone_detached();
  m.cls.b = cls.b.clone_detached();
  return m;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, Stream::init));
  std::size_t V = config.vocab_size, T = config.max_len, H = config.hidden;
  std::size_t F = H * config.ff_multiplier, C = config.num_classes;

  auto weight = [&](std::size_t r, std::size_t c) {
    return Tensor::trunc_normal({r, c}, kInitStd, rng, true);
  };
  auto zeros = [&](std::size_t n) { return Tensor::zeros({n}, true); };
  auto ones = [&](std::size_t n) { return Tensor::full({n}, 1.0, true); };

  Model m;
  m.config = config;
  m.encoder.tok_emb = weight(V, H);
  m.encoder.pos_emb = weight(T, H);
  m.encoder.emb_ln_gain = ones(H);
  m.encoder.emb_ln_bias = zeros(H);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LayerParams lp;
    lp.wq = weight(H, H);
    lp.bq = zeros(H);
    lp.wk = weight(H, H);
    lp.bk = zeros(H);
    lp.wv = weight(H, H);
    lp.bv = zeros(H);
    lp.wo = weight(H, H);
    lp.bo = zeros(H);
    lp.ln1_gain = ones(H);
    lp.ln1_bias = zeros(H);
    lp.ff_w1 = weight(H, F);
    lp.ff_b1 = zeros(F);
    lp.ff_w2 = weight(F, H);
    lp.ff_b2 = zeros(H);
    lp.ln2_gain = ones(H);
    lp.ln2_bias = zeros(H);
    m.encoder.layers.push_back(std::move(lp));
  }
  m.lm.w = weight(H, V);
  m.lm.b = zeros(V);
  m.cls.w = weight(H, C);
  m.cls.b = zeros(C);
  return m;
}

namespace {

Tensor maybe_dropout(const Tensor& x, const Model& model, bool train_mode,
                     Rng* rng) {
  if (!train_mode || rng == nullptr || model.config.dropout_rate == 0.0)
    return x;
  return dropout(x, model.config.dropout_rate, *rng);
}

Tensor activation(const Tensor& x, const Model& model) {
  return model.config.activation == "relu" ? relu(x) : gelu(x);
}

Tensor encoder_forward(Tensor x, const std::vector<double>& key_mask,
                       const Model& model, bool train_mode, Rng* rng) {
  const ModelConfig& cfg = model.config;
  std::size_t T = cfg.max_len, H = cfg.hidden;
  std::size_t heads = cfg.num_heads, d = H / heads;
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor mask = Tensor::from({T}, key_mask);
  x = add(x, model.encoder.pos_emb);
  x = layer_norm(x, model.encoder.emb_ln_gain, model.encoder.emb_ln_bias);
  x = maybe_dropout(x, model, train_mode, rng);

  for (const LayerParams& lp : model.encoder.layers) {
    Tensor q = add_rowwise(matmul(x, lp.wq), lp.bq);
    Tensor k = add_rowwise(matmul(x, lp.wk), lp.bk);
    Tensor v = add_rowwise(matmul(x, lp.wv), lp.bv);
    std::vector<Tensor> contexts;
    contexts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * d, d);
      Tensor kh = slice_cols(k, h * d, d);
      Tensor vh = slice_cols(v, h * d, d);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
      scores = add_rowwise(scores, mask);  // PAD keys pushed to -inf
      Tensor probs = softmax(scores, 1);
      contexts.push_back(matmul(probs, vh));
    }
    Tensor attn = add_rowwise(matmul(concat_cols(contexts), lp.wo), lp.bo);
    attn = maybe_dropout(attn, model, train_mode, rng);
    x = layer_norm(add(x, attn), lp.ln1_gain, lp.ln1_bias);

    Tensor ff = activation(add_rowwise(matmul(x, lp.ff_w1), lp.ff_b1), model);
    ff = add_rowwise(matmul(ff, lp.ff_w2), lp.ff_b2);
    ff = maybe_dropout(ff, model, train_mode, rng);
    x = layer_norm(add(x, ff), lp.ln2_gain, lp.ln2_bias);
  }
  return x;
}

}  // namespace

Tensor encode(const Example& ex, const Model& model, bool train_mode,
              Rng* dropout_rng) {
  if (ex.token_ids.size() != model.config.max_len)
    throw std::invalid_argument("encode: sequence length does not match T");
  std::vector<double> key_mask(ex.token_ids.size(), 0.0);
  for (std::size_t t = 0; t < ex.token_ids.size(); ++t)
    if (ex.token_ids[t] == Vocabulary::kPad) key_mask[t] = kAttnMaskValue;
  Tensor x = embed_rows(model.encoder.tok_emb, ex.token_ids);
  return encoder_forward(std::move(x), key_mask, model, train_mode,
                         dropout_rng);
}

Tensor encode(const SoftSequence& seq, const Model& model, bool train_mode,
              Rng* dropout_rng) {
  if (seq.rows.size() != model.config.max_len)
    throw std::invalid_argument("encode: sequence length does not match T");
  std::vector<double> key_mask(seq.rows.size(), 0.0);
  for (std::size_t t = 0; t < seq.rows.size(); ++t) {
    const auto& row = seq.rows[t];
    if (row.size() == 1 && row[0].first == Vocabulary::kPad)
      key_mask[t] = kAttnMaskValue;
  }
  Tensor x = embed_soft(model.encoder.tok_emb, seq.rows);
  return encoder_forward(std::move(x), key_mask, model, train_mode,
                         dropout_rng);
}

Tensor lm_predict(const Tensor& embeddings, const LMHead& head) {
  if (embeddings.shape().size() != 2 || embeddings.cols() != head.w.rows())
    throw std::invalid_argument("lm_predict: embedding width mismatch");
  return add_rowwise(matmul(embeddings, head.w), head.b);
}

Tensor classify(const Tensor& embeddings, const ClsHead& head) {
  if (embeddings.shape().size() != 2 || embeddings.cols() != head.w.rows())
    throw std::invalid_argument("classify: embedding width mismatch");
  Tensor cls_row = select_rows(embeddings, {0});
  return add_rowwise(matmul(cls_row, head.w), head.b);
}

// ------------------------------------------------------------- checkpoints

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  std::string cfg = model.config.to_json();
  write_pod(out, static_cast<std::uint64_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  auto named = model.named_parameters();
  write_pod(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);

  std::ofstream sidecar(path + ".config.json");
  sidecar << cfg << "\n";
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in) != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  auto cfg_len = read_pod<std::uint64_t>(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated config");
  ModelConfig config = ModelConfig::from_json(cfg_text);

  // Build a skeleton with the right shapes, then overwrite values by name.
  Model model = init_model(config, 0);
  auto named = model.named_parameters();
  std::unordered_map<std::string, Tensor> by_name(named.begin(), named.end());

  auto count = read_pod<std::uint32_t>(in);
  if (count != named.size())
    throw std::runtime_error("load_checkpoint: unexpected block count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("load_checkpoint: truncated block name");
    auto rank = read_pod<std::uint32_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("load_checkpoint: unknown block " + name);
    if (it->second.shape() != shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(it->second.values().data()),
            static_cast<std::streamsize>(it->second.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated block " + name);
  }
  return model;
}

}  // namespace decra
