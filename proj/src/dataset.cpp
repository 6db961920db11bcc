#include "decra/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "decra/rng.hpp"
#include "json.hpp"

namespace decra {

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
    // punctuation dropped
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t max_vocab) {
  if (texts.empty()) throw std::invalid_argument("build_vocab: no texts");
  if (max_vocab < 5)
    throw std::invalid_argument("build_vocab: max_vocab must be at least 5");
  std::map<std::string, std::size_t> counts;
  for (const std::string& t : texts)
    for (const std::string& tok : tokenize(t)) counts[tok] += 1;

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.id_to_token = {"[PAD]", "[MASK]", "[CLS]", "[UNK]"};
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  for (const auto& [tok, cnt] : ranked) {
    if (v.size() >= max_vocab) break;
    v.token_to_id[tok] = static_cast<int>(v.size());
    v.id_to_token.push_back(tok);
  }
  return v;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocab: cannot open " + path);
  nlohmann::json j{{"tokens", vocab.id_to_token}};
  out << j.dump() << "\n";
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocab: cannot open " + path);
  nlohmann::json j;
  in >> j;
  Vocabulary v;
  v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  if (v.id_to_token.size() < 4)
    throw std::runtime_error("load_vocab: missing reserved tokens in " + path);
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

Example encode(const std::string& text, const Vocabulary& vocab,
               std::size_t T) {
  if (T < 2) throw std::invalid_argument("encode: T must be at least 2");
  Example ex;
  ex.token_ids.reserve(T);
  ex.token_ids.push_back(Vocabulary::kCls);
  for (const std::string& tok : tokenize(text)) {
    if (ex.token_ids.size() >= T) break;
    ex.token_ids.push_back(vocab.lookup(tok));
  }
  ex.token_ids.resize(T, Vocabulary::kPad);
  return ex;
}

std::string decode(const Example& ex, const Vocabulary& vocab) {
  std::string out;
  for (int id : ex.token_ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kCls) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.id_to_token.at(static_cast<std::size_t>(id));
  }
  return out;
}

SoftSequence one_hot_sequence(const Example& ex) {
  SoftSequence s;
  s.label = ex.label;
  s.rows.reserve(ex.token_ids.size());
  for (int id : ex.token_ids) s.rows.push_back({{id, 1.0}});
  return s;
}

LabeledDataset load_jsonl(const std::string& path,
                          std::shared_ptr<Vocabulary> vocab, std::size_t T,
                          std::size_t num_classes, std::size_t max_vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);

  std::vector<std::string> texts;
  std::vector<std::string> raw_labels;
  bool labels_numeric = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      if (!obj.is_object() || !obj.contains("text") || !obj.contains("label"))
        throw std::runtime_error("missing \"text\" or \"label\"");
      if (!obj["text"].is_string()) throw std::runtime_error("\"text\" not a string");
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "load_jsonl: " << path << " line " << line_no << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
    texts.push_back(obj["text"].get<std::string>());
    const auto& lab = obj["label"];
    if (lab.is_number_integer()) {
      raw_labels.push_back(std::to_string(lab.get<long long>()));
    } else if (lab.is_string()) {
      labels_numeric = false;
      raw_labels.push_back(lab.get<std::string>());
    } else {
      std::ostringstream msg;
      msg << "load_jsonl: " << path << " line " << line_no
          << ": \"label\" must be a string or integer";
      throw std::runtime_error(msg.str());
    }
  }
  if (texts.empty()) throw std::runtime_error("load_jsonl: " + path + " is empty");

  std::vector<std::string> names(raw_labels);
  std::sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
    if (labels_numeric) return std::stoll(a) < std::stoll(b);
    return a < b;
  });
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (num_classes != 0 && names.size() != num_classes) {
    std::ostringstream msg;
    msg << "load_jsonl: " << path << " has " << names.size()
        << " distinct labels, expected " << num_classes;
    throw std::runtime_error(msg.str());
  }

  LabeledDataset ds;
  ds.label_names = names;
  ds.num_classes = names.size();
  ds.max_len = T;
  ds.vocab = vocab ? std::move(vocab)
                   : std::make_shared<Vocabulary>(build_vocab(texts, max_vocab));
  std::unordered_map<std::string, int> label_id;
  for (std::size_t i = 0; i < names.size(); ++i)
    label_id[names[i]] = static_cast<int>(i);
  ds.examples.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Example ex = encode(texts[i], *ds.vocab, T);
    ex.label = label_id[raw_labels[i]];
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

namespace {

LabeledDataset subset_from(const LabeledDataset& data,
                           const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.num_classes = data.num_classes;
  out.max_len = data.max_len;
  out.vocab = data.vocab;
  out.label_names = data.label_names;
  out.examples.reserve(indices.size());
  for (std::size_t i : indices) out.examples.push_back(data.examples[i]);
  return out;
}

}  // namespace

std::vector<SubsetPair> sample_subsets(const LabeledDataset& data,
                                       const SubsetSpec& spec) {
  if (spec.num_subsets == 0 || spec.train_per_class == 0)
    throw std::invalid_argument("sample_subsets: counts must be positive");

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.examples.size(); ++i)
    by_class[static_cast<std::size_t>(data.examples[i].label)].push_back(i);
  std::size_t need = spec.train_per_class + spec.val_per_class;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < need) {
      std::ostringstream msg;
      msg << "sample_subsets: class " << c << " has only " << by_class[c].size()
          << " examples, need " << need;
      throw std::invalid_argument(msg.str());
    }
  }

  std::vector<SubsetPair> out;
  out.reserve(spec.num_subsets);
  for (std::size_t s = 0; s < spec.num_subsets; ++s) {
    Rng rng(derive_seed(spec.seed, Stream::subset, {s}));
    SubsetPair pair;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      std::vector<std::size_t> pool = by_class[c];
      std::shuffle(pool.begin(), pool.end(), rng.engine());
      for (std::size_t i = 0; i < spec.train_per_class; ++i)
        pair.train_indices.push_back(pool[i]);
      for (std::size_t i = 0; i < spec.val_per_class; ++i)
        pair.val_indices.push_back(pool[spec.train_per_class + i]);
    }
    pair.train = subset_from(data, pair.train_indices);
    pair.val = subset_from(data, pair.val_indices);
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0)
    throw std::invalid_argument("epoch_batches: batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, Stream::shuffle, {epoch}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

}  // namespace decra
