#pragma once

// Word confusion networks ("sausages"): data model, SRILM-style text I/O,
// a JSON mirror, and the cleaning / 1-best utilities used to build model
// inputs.

#include <cstddef>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace confnet2seq::confnet {

// Epsilon arc emitted by the aligner when a hypothesis has no word at a slot.
inline constexpr std::string_view kDeleteToken = "*DELETE*";

struct Arc {
  std::string token;
  double posterior = 0.0;

  friend bool operator==(const Arc&, const Arc&) = default;
};

// One set of time-aligned competing hypotheses.
struct Bin {
  std::vector<Arc> arcs;

  double posterior_sum() const;
  friend bool operator==(const Bin&, const Bin&) = default;
};

struct ConfusionNetwork {
  std::string id;
  std::vector<Bin> bins;

  std::size_t size() const { return bins.size(); }
  bool empty() const { return bins.empty(); }
  friend bool operator==(const ConfusionNetwork&, const ConfusionNetwork&) = default;
};

// Tokens treated as noise or interjections. Membership is exact match after
// case folding.
class NoiseLexicon {
 public:
  // *DELETE*, [noise], [laughter], uh, oh
  static NoiseLexicon defaults();

  explicit NoiseLexicon(const std::vector<std::string>& tokens);

  bool contains(std::string_view token) const;
  void add(std::string_view token);
  const std::set<std::string>& tokens() const { return tokens_; }

 private:
  std::set<std::string> tokens_;
};

struct ParseOptions {
  // Bins wider than this keep their highest-posterior arcs (0 = unlimited).
  std::size_t max_arcs = 20;
  // Networks longer than this are truncated (0 = unlimited).
  std::size_t max_bins = 50;
};

// Reads every `name` record in the stream. Posteriors are returned as
// written; call normalize() before using them as probabilities.
std::vector<ConfusionNetwork> parse_sausage(std::istream& in, const ParseOptions& options = {});
std::vector<ConfusionNetwork> parse_sausage(std::string_view text, const ParseOptions& options = {});

// Applies the arc and bin caps of `options` to an already-built network.
ConfusionNetwork apply_limits(const ConfusionNetwork& net, const ParseOptions& options);

void write_sausage(std::ostream& out, const ConfusionNetwork& net);
std::string to_sausage(const std::vector<ConfusionNetwork>& nets);

nlohmann::json to_json(const ConfusionNetwork& net);
ConfusionNetwork from_json(const nlohmann::json& j);
// Accepts a single object, an array of objects, or one object per line.
std::vector<ConfusionNetwork> parse_json_networks(std::string_view text);

// Divides every posterior by its bin sum. Bins already summing to 1 within
// 1e-12 are left bit-identical, so normalize is idempotent.
ConfusionNetwork normalize(const ConfusionNetwork& net);
bool is_normalized(const ConfusionNetwork& net, double tolerance = 1e-9);

ConfusionNetwork truncate(const ConfusionNetwork& net, std::size_t max_bins);

struct PruneOptions {
  // Also strip noise arcs from bins that keep at least one real word.
  bool drop_noise_arcs = false;
};

struct PruneResult {
  ConfusionNetwork network;
  std::size_t removed_bins = 0;
  // Every bin was noise; the network is valid but has no content.
  bool emptied = false;
};

PruneResult prune_noise(const ConfusionNetwork& net, const NoiseLexicon& noise,
                        const PruneOptions& options = {});

// Highest-posterior arc per bin (ties go to the earlier arc); deletion
// markers are dropped from the output.
std::vector<std::string> best_hypothesis(const ConfusionNetwork& net);

// Network of singleton bins with posterior 1, one per token.
ConfusionNetwork from_tokens(std::string id, const std::vector<std::string>& tokens);

struct NetworkStats {
  std::size_t bin_count = 0;
  std::size_t max_bin_width = 0;
  double mean_bin_width = 0.0;
  double mean_bin_entropy = 0.0;  // nats

  nlohmann::json to_json() const;
};

NetworkStats stats(const ConfusionNetwork& net);

}  // namespace confnet2seq::confnet
