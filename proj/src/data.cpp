#include "confnet2seq/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "confnet2seq/errors.hpp"
#include "confnet2seq/text.hpp"

namespace confnet2seq::data {

const std::string& Vocabulary::pad_token() {
  static const std::string s = "<pad>";
  return s;
}
const std::string& Vocabulary::unk_token() {
  static const std::string s = "<unk>";
  return s;
}
const std::string& Vocabulary::bos_token() {
  static const std::string s = "<s>";
  return s;
}
const std::string& Vocabulary::eos_token() {
  static const std::string s = "</s>";
  return s;
}

Vocabulary::Vocabulary() {
  push(pad_token());
  push(unk_token());
  push(bos_token());
  push(eos_token());
}

void Vocabulary::push(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens)
    if (!t.empty()) v.push(t);
  return v;
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index(const std::string& token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(std::size_t index) const {
  if (index >= tokens_.size())
    throw IndexError("vocabulary index " + std::to_string(index) + " out of range (size " +
                     std::to_string(tokens_.size()) + ")");
  return tokens_[index];
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < kReserved || tokens[kPad] != pad_token() || tokens[kUnk] != unk_token() ||
      tokens[kBos] != bos_token() || tokens[kEos] != eos_token())
    throw FormatError("vocabulary JSON must start with the reserved tokens");
  Vocabulary v = from_tokens({tokens.begin() + kReserved, tokens.end()});
  if (v.size() != tokens.size()) throw FormatError("vocabulary JSON contains duplicate tokens");
  return v;
}

nlohmann::json Sample::to_json() const {
  nlohmann::json j = {{"id", id},
                      {"confnet", confnet::to_json(question_net)},
                      {"factoid", factoid_answer},
                      {"answer", full_answer}};
  if (best_hypothesis_text) j["best_hypothesis"] = *best_hypothesis_text;
  return j;
}

InputMode parse_input_mode(const std::string& name) {
  if (name == "clean") return InputMode::clean;
  if (name == "raw") return InputMode::raw;
  if (name == "best-hyp" || name == "best") return InputMode::best_hypothesis;
  throw ContractError("unknown input mode '" + name + "' (expected clean, raw or best-hyp)");
}

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::clean: return "clean";
    case InputMode::raw: return "raw";
    case InputMode::best_hypothesis: return "best-hyp";
  }
  return "clean";
}

std::string Dataset::serialize() const {
  std::string out;
  for (const auto& s : samples) out += s.to_json().dump() + '\n';
  for (const auto& r : rejected)
    out += nlohmann::json({{"rejected", r.id}, {"line", r.line}, {"reason", r.reason}}).dump() + '\n';
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_string(const nlohmann::json& j, const char* field, std::size_t lineno) {
  if (!j.contains(field)) throw DataError("manifest line " + std::to_string(lineno) + ": missing field '" + field + "'");
  if (!j[field].is_string())
    throw DataError("manifest line " + std::to_string(lineno) + ": field '" + field + "' must be a string");
  return j[field].get<std::string>();
}

confnet::ConfusionNetwork read_network(const nlohmann::json& ref, const std::string& id,
                                       const std::filesystem::path& base_dir, const confnet::ParseOptions& parse) {
  try {
    if (ref.is_object()) return confnet::apply_limits(confnet::from_json(ref), parse);
    if (!ref.is_string()) throw DataError("field 'confnet' must be an object or a path");
    const std::filesystem::path rel = ref.get<std::string>();
    const auto path = rel.is_absolute() ? rel : base_dir / rel;
    const std::string body = read_file(path);
    const auto first = body.find_first_not_of(" \t\r\n");
    std::vector<confnet::ConfusionNetwork> nets;
    if (first != std::string::npos && (body[first] == '{' || body[first] == '[')) {
      nets = confnet::parse_json_networks(body);
      for (auto& n : nets) n = confnet::apply_limits(n, parse);
    } else {
      nets = confnet::parse_sausage(body, parse);
    }
    if (nets.size() == 1) return nets.front();
    for (const auto& n : nets)
      if (n.id == id) return n;
    throw DataError(path.string() + " holds " + std::to_string(nets.size()) + " networks, none named '" + id + "'");
  } catch (const Error& e) {
    throw DataError("sample '" + id + "': unparseable confusion network: " + e.what());
  }
}

std::vector<std::string> truncated(std::vector<std::string> tokens, std::size_t max_length) {
  if (max_length != 0 && tokens.size() > max_length) tokens.resize(max_length);
  return tokens;
}

}  // namespace

Dataset load_corpus(const std::filesystem::path& manifest, const LoadOptions& options) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot read manifest " + manifest.string());
  return load_corpus(in, manifest.parent_path(), options);
}

Dataset load_corpus(std::istream& manifest, const std::filesystem::path& base_dir, const LoadOptions& options) {
  Dataset dataset;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(manifest, raw)) {
    ++lineno;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw DataError("manifest line " + std::to_string(lineno) + ": expected a JSON object");
    Sample sample;
    sample.id = require_string(j, "id", lineno);
    if (!j.contains("confnet"))
      throw DataError("manifest line " + std::to_string(lineno) + ": missing field 'confnet'");
    const std::string factoid = require_string(j, "factoid", lineno);
    std::string answer;
    if (options.require_answer || j.contains("answer")) answer = require_string(j, "answer", lineno);

    confnet::ConfusionNetwork net = read_network(j["confnet"], sample.id, base_dir, options.parse);
    try {
      net = confnet::normalize(net);
    } catch (const Error& e) {
      throw DataError("sample '" + sample.id + "': " + e.what());
    }
    if (j.contains("best_hypothesis")) {
      if (!j["best_hypothesis"].is_string())
        throw DataError("manifest line " + std::to_string(lineno) + ": field 'best_hypothesis' must be a string");
      sample.best_hypothesis_text = text::tokenize(j["best_hypothesis"].get<std::string>());
    } else {
      sample.best_hypothesis_text = confnet::best_hypothesis(net);
    }
    sample.factoid_answer = truncated(text::tokenize(factoid), options.max_length);
    sample.full_answer = truncated(text::tokenize(answer), options.max_length);

    const auto reject = [&](std::string reason) {
      dataset.rejected.push_back({lineno, sample.id, std::move(reason)});
    };
    if (sample.factoid_answer.empty()) {
      reject("empty factoid answer");
      continue;
    }
    if (options.require_answer && sample.full_answer.empty()) {
      reject("empty full-length answer");
      continue;
    }
    switch (options.mode) {
      case InputMode::raw:
        sample.question_net = std::move(net);
        break;
      case InputMode::clean: {
        auto pruned = confnet::prune_noise(net, options.noise, options.prune);
        if (pruned.emptied) {
          reject("confusion network is empty after noise pruning");
          continue;
        }
        sample.question_net = std::move(pruned.network);
        break;
      }
      case InputMode::best_hypothesis:
        sample.question_net =
            confnet::from_tokens(sample.id, truncated(*sample.best_hypothesis_text, options.parse.max_bins));
        break;
    }
    if (sample.question_net.empty()) {
      reject("question has no bins");
      continue;
    }
    dataset.samples.push_back(std::move(sample));
  }
  return dataset;
}

Vocabulary build_vocab(const Dataset& dataset, std::size_t max_size, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : dataset.samples) {
    for (const auto& bin : s.question_net.bins)
      for (const auto& arc : bin.arcs) ++counts[arc.token];
    for (const auto& t : s.factoid_answer) ++counts[t];
    for (const auto& t : s.full_answer) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is ordered lexicographically, so a stable sort on frequency keeps
  // lexicographic order among ties.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (const auto& [token, n] : ranked) {
    if (n < min_freq) continue;
    if (max_size != 0 && tokens.size() >= max_size) break;
    tokens.push_back(token);
  }
  return Vocabulary::from_tokens(tokens);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::mt19937_64& rng,
                               double range, bool trainable) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read embeddings " + path.string());
  return load_embeddings(in, vocab, rng, range, trainable);
}

EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, std::mt19937_64& rng, double range,
                               bool trainable) {
  std::map<std::string, std::vector<double>> vectors;
  std::size_t dim = 0;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto fields = text::split_whitespace(raw);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw FormatError("embeddings line " + std::to_string(lineno) + ": no values");
    const std::size_t d = fields.size() - 1;
    if (dim == 0) dim = d;
    if (d != dim)
      throw FormatError("embeddings line " + std::to_string(lineno) + ": dimension " + std::to_string(d) +
                        " differs from " + std::to_string(dim));
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) {
      char* end = nullptr;
      v[i] = std::strtod(fields[i + 1].c_str(), &end);
      if (end != fields[i + 1].c_str() + fields[i + 1].size() || !std::isfinite(v[i]))
        throw FormatError("embeddings line " + std::to_string(lineno) + ": invalid number '" + fields[i + 1] + "'");
    }
    vectors.emplace(fields[0], std::move(v));  // first occurrence wins
  }
  if (dim == 0) throw FormatError("embeddings file is empty");

  EmbeddingTable table;
  table.trainable = trainable;
  std::uniform_real_distribution<double> init(-range, range);
  std::vector<double> values(vocab.size() * dim);
  for (double& v : values) v = init(rng);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto it = vectors.find(vocab.token(i));
    if (it == vectors.end()) continue;
    std::copy(it->second.begin(), it->second.end(), values.begin() + static_cast<std::ptrdiff_t>(i * dim));
    ++table.matched;
  }
  table.coverage = static_cast<double>(table.matched) / static_cast<double>(vocab.size());
  table.table = trainable ? num::Tensor::parameter({vocab.size(), dim}, std::move(values))
                          : num::Tensor::constant({vocab.size(), dim}, std::move(values));
  return table;
}

std::size_t Batch::real_count(const std::vector<std::vector<bool>>& mask) {
  std::size_t n = 0;
  for (const auto& row : mask) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  return n;
}

std::vector<Batch> batchify(const Dataset& dataset, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset.samples[a].question_net.size() < dataset.samples[b].question_net.size();
  });
  const auto mask_row = [](std::size_t real, std::size_t width) {
    std::vector<bool> row(width, false);
    std::fill(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(real), true);
    return row;
  };
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch batch;
    const std::size_t end = std::min(order.size(), start + batch_size);
    batch.samples.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t q = 0, f = 0, t = 0;
    for (std::size_t i : batch.samples) {
      const Sample& s = dataset.samples[i];
      q = std::max(q, s.question_net.size());
      f = std::max(f, s.factoid_answer.size());
      t = std::max(t, s.full_answer.size() + 1);
    }
    for (std::size_t i : batch.samples) {
      const Sample& s = dataset.samples[i];
      batch.question_mask.push_back(mask_row(s.question_net.size(), q));
      batch.factoid_mask.push_back(mask_row(s.factoid_answer.size(), f));
      batch.target_mask.push_back(mask_row(s.full_answer.size() + 1, t));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace confnet2seq::data
