#pragma once

// Corpus ingestion: JSON-lines manifests of (question confusion network,
// factoid answer, full-length answer) triples, vocabulary construction,
// pretrained embeddings and length-bucketed batching.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "confnet2seq/confnet.hpp"
#include "confnet2seq/tensor.hpp"

namespace confnet2seq::data {

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kReserved = 4;

  static const std::string& pad_token();
  static const std::string& unk_token();
  static const std::string& bos_token();
  static const std::string& eos_token();

  // Reserved entries only.
  Vocabulary();
  // Reserved entries followed by `tokens` in order; duplicates and reserved
  // spellings are skipped.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  std::optional<std::size_t> find(const std::string& token) const;
  // UNK for unknown tokens.
  std::size_t index(const std::string& token) const;
  const std::string& token(std::size_t index) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Sample {
  std::string id;
  confnet::ConfusionNetwork question_net;
  std::vector<std::string> factoid_answer;
  std::vector<std::string> full_answer;
  // 1-best transcript of the unpruned network, for the best-hypothesis input.
  std::optional<std::vector<std::string>> best_hypothesis_text;

  nlohmann::json to_json() const;
};

// Which question representation feeds the model.
enum class InputMode { clean, raw, best_hypothesis };

InputMode parse_input_mode(const std::string& name);
std::string to_string(InputMode mode);

struct Rejection {
  std::size_t line = 0;
  std::string id;
  std::string reason;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<Rejection> rejected;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  // Canonical serialization; identical manifests give identical bytes.
  std::string serialize() const;
};

struct LoadOptions {
  InputMode mode = InputMode::clean;
  confnet::NoiseLexicon noise = confnet::NoiseLexicon::defaults();
  confnet::PruneOptions prune;
  confnet::ParseOptions parse;
  std::size_t max_length = 50;
  // Generation inputs may omit the reference answer.
  bool require_answer = true;
};

// Manifest lines: {"id", "confnet", "factoid", "answer"} where "confnet" is
// either an inline JSON network or a path (relative to the manifest) to a
// sausage or JSON file. Missing fields throw DataError naming the line;
// unparseable networks throw naming the sample id. Samples whose question
// ends up empty (cleaning removed every bin, or the 1-best transcript is all
// deletions) are recorded in Dataset::rejected.
//
// Sample::question_net holds the representation selected by options.mode:
// the cleaned network, the raw normalized network, or singleton bins built
// from the 1-best transcript.
Dataset load_corpus(const std::filesystem::path& manifest, const LoadOptions& options = {});
Dataset load_corpus(std::istream& manifest, const std::filesystem::path& base_dir, const LoadOptions& options = {});

// Frequency-descending, ties lexicographic; max_size excludes the reserved
// entries (0 = unlimited).
Vocabulary build_vocab(const Dataset& dataset, std::size_t max_size = 0, std::size_t min_freq = 1);

struct EmbeddingTable {
  num::Tensor table;  // [V, E]
  bool trainable = true;
  std::size_t matched = 0;
  double coverage = 0.0;  // matched / |V|
};

// Text format: token followed by E decimals per line. Tokens not in the file
// get rows from `rng`, uniform in [-range, range].
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::mt19937_64& rng,
                               double range = 0.1, bool trainable = true);
EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, std::mt19937_64& rng, double range = 0.1,
                               bool trainable = true);

struct Batch {
  std::vector<std::size_t> samples;  // indices into the dataset
  // Row r marks the real positions of sample r; widths are the batch maxima.
  std::vector<std::vector<bool>> question_mask;
  std::vector<std::vector<bool>> factoid_mask;
  // Full answer plus the end-of-sequence step.
  std::vector<std::vector<bool>> target_mask;

  std::size_t size() const { return samples.size(); }
  static std::size_t real_count(const std::vector<std::vector<bool>>& mask);
};

// Buckets by bin count (stable) so each batch holds similar lengths.
std::vector<Batch> batchify(const Dataset& dataset, std::size_t batch_size);

}  // namespace confnet2seq::data
