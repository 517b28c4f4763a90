#include "confnet2seq/confnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "confnet2seq/errors.hpp"
#include "confnet2seq/text.hpp"

namespace confnet2seq::confnet {

double Bin::posterior_sum() const {
  double sum = 0.0;
  for (const Arc& arc : arcs) sum += arc.posterior;
  return sum;
}

NoiseLexicon NoiseLexicon::defaults() {
  return NoiseLexicon({std::string(kDeleteToken), "[noise]", "[laughter]", "uh", "oh"});
}

NoiseLexicon::NoiseLexicon(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) add(t);
  if (tokens_.empty()) throw ContractError("noise lexicon must not be empty");
}

bool NoiseLexicon::contains(std::string_view token) const {
  return tokens_.count(text::fold_case(token)) > 0;
}

void NoiseLexicon::add(std::string_view token) {
  if (token.empty()) throw ContractError("noise lexicon entries must be non-empty");
  tokens_.insert(text::fold_case(token));
}

namespace {

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::size_t> parse_index(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  return static_cast<std::size_t>(std::strtoull(s.c_str(), nullptr, 10));
}

// Keeps the `max_arcs` highest-posterior arcs, preserving file order among
// the survivors.
void cap_arcs(Bin& bin, std::size_t max_arcs) {
  if (max_arcs == 0 || bin.arcs.size() <= max_arcs) return;
  std::vector<std::size_t> order(bin.arcs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bin.arcs[a].posterior > bin.arcs[b].posterior;
  });
  order.resize(max_arcs);
  std::sort(order.begin(), order.end());
  std::vector<Arc> kept;
  kept.reserve(max_arcs);
  for (std::size_t i : order) kept.push_back(std::move(bin.arcs[i]));
  bin.arcs = std::move(kept);
}

void add_arc(Bin& bin, std::string token, double posterior) {
  for (Arc& arc : bin.arcs) {
    if (arc.token == token) {
      arc.posterior += posterior;
      return;
    }
  }
  bin.arcs.push_back({std::move(token), posterior});
}

class SausageReader {
 public:
  explicit SausageReader(const ParseOptions& options) : options_(options) {}

  void line(const std::string& raw, std::size_t lineno) {
    const auto fields = text::split_whitespace(raw);
    if (fields.empty()) return;
    const std::string& key = fields[0];
    if (key == "name") {
      if (fields.size() != 2) throw ParseError("expected `name <id>`", lineno);
      finish();
      current_ = ConfusionNetwork{fields[1], {}};
      declared_.reset();
      start_line_ = lineno;
    } else if (key == "numaligns") {
      require_open(key, lineno);
      if (fields.size() != 2) throw ParseError("expected `numaligns <m>`", lineno);
      const auto m = parse_index(fields[1]);
      if (!m) throw ParseError("invalid align count '" + fields[1] + "'", lineno);
      if (declared_) throw StructuralError("line " + std::to_string(lineno) + ": repeated numaligns");
      declared_ = *m;
    } else if (key == "posterior") {
      require_open(key, lineno);
      if (fields.size() != 2 || !parse_double(fields[1]))
        throw ParseError("expected `posterior <scale>`", lineno);
    } else if (key == "align") {
      require_open(key, lineno);
      align(fields, lineno);
    } else if (key == "info" || key == "reference" || key == "hyps") {
      // SRILM bookkeeping lines; they carry nothing the data model keeps.
      require_open(key, lineno);
    } else {
      throw ParseError("unknown keyword '" + key + "'", lineno);
    }
  }

  std::vector<ConfusionNetwork> finish_all() {
    finish();
    return std::move(nets_);
  }

 private:
  void require_open(const std::string& key, std::size_t lineno) const {
    if (!current_) throw ParseError("`" + key + "` before any `name` record", lineno);
  }

  void align(const std::vector<std::string>& fields, std::size_t lineno) {
    if (fields.size() < 4 || fields.size() % 2 != 0)
      throw ParseError("align line needs an index followed by token/probability pairs", lineno);
    const auto index = parse_index(fields[1]);
    if (!index) throw ParseError("invalid align index '" + fields[1] + "'", lineno);
    const std::size_t expected = current_->bins.size();
    if (*index < expected)
      throw StructuralError("line " + std::to_string(lineno) + ": duplicate align index " +
                            fields[1] + " in network '" + current_->id + "'");
    if (*index > expected)
      throw StructuralError("line " + std::to_string(lineno) + ": align index gap in network '" +
                            current_->id + "' (expected " + std::to_string(expected) + ", got " +
                            fields[1] + ")");
    if (declared_ && *index >= *declared_)
      throw StructuralError("line " + std::to_string(lineno) + ": align index " + fields[1] +
                            " exceeds numaligns " + std::to_string(*declared_));
    Bin bin;
    for (std::size_t k = 2; k < fields.size(); k += 2) {
      const auto p = parse_double(fields[k + 1]);
      if (!p) throw ParseError("invalid probability '" + fields[k + 1] + "'", lineno);
      if (*p < 0.0) throw ParseError("negative probability '" + fields[k + 1] + "'", lineno);
      add_arc(bin, fields[k], *p);
    }
    cap_arcs(bin, options_.max_arcs);
    current_->bins.push_back(std::move(bin));
  }

  void finish() {
    if (!current_) return;
    if (declared_ && current_->bins.size() != *declared_)
      throw StructuralError("network '" + current_->id + "' (line " + std::to_string(start_line_) +
                            "): numaligns " + std::to_string(*declared_) + " but " +
                            std::to_string(current_->bins.size()) + " align lines (index gap)");
    if (options_.max_bins != 0 && current_->bins.size() > options_.max_bins)
      current_->bins.resize(options_.max_bins);
    nets_.push_back(std::move(*current_));
    current_.reset();
  }

  ParseOptions options_;
  std::optional<ConfusionNetwork> current_;
  std::optional<std::size_t> declared_;
  std::size_t start_line_ = 0;
  std::vector<ConfusionNetwork> nets_;
};

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

}  // namespace

std::vector<ConfusionNetwork> parse_sausage(std::istream& in, const ParseOptions& options) {
  SausageReader reader(options);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) reader.line(raw, ++lineno);
  return reader.finish_all();
}

std::vector<ConfusionNetwork> parse_sausage(std::string_view text, const ParseOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_sausage(in, options);
}

ConfusionNetwork apply_limits(const ConfusionNetwork& net, const ParseOptions& options) {
  ConfusionNetwork out = truncate(net, options.max_bins);
  for (Bin& bin : out.bins) cap_arcs(bin, options.max_arcs);
  return out;
}

void write_sausage(std::ostream& out, const ConfusionNetwork& net) {
  out << "name " << net.id << '\n'
      << "numaligns " << net.bins.size() << '\n'
      << "posterior 1\n";
  for (std::size_t i = 0; i < net.bins.size(); ++i) {
    out << "align " << i;
    for (const Arc& arc : net.bins[i].arcs) out << ' ' << arc.token << ' ' << format_prob(arc.posterior);
    out << '\n';
  }
}

std::string to_sausage(const std::vector<ConfusionNetwork>& nets) {
  std::ostringstream out;
  for (const auto& net : nets) write_sausage(out, net);
  return out.str();
}

nlohmann::json to_json(const ConfusionNetwork& net) {
  nlohmann::json bins = nlohmann::json::array();
  for (const Bin& bin : net.bins) {
    nlohmann::json arcs = nlohmann::json::array();
    for (const Arc& arc : bin.arcs) arcs.push_back({{"token", arc.token}, {"posterior", arc.posterior}});
    bins.push_back(std::move(arcs));
  }
  return {{"id", net.id}, {"bins", std::move(bins)}};
}

ConfusionNetwork from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.contains("bins") || !j["id"].is_string() ||
      !j["bins"].is_array())
    throw FormatError("confusion network JSON needs string `id` and array `bins`");
  ConfusionNetwork net{j["id"].get<std::string>(), {}};
  for (const auto& jbin : j["bins"]) {
    if (!jbin.is_array() || jbin.empty())
      throw FormatError("network '" + net.id + "': every bin must be a non-empty array");
    Bin bin;
    for (const auto& jarc : jbin) {
      if (!jarc.is_object() || !jarc.contains("token") || !jarc.contains("posterior") ||
          !jarc["token"].is_string() || !jarc["posterior"].is_number())
        throw FormatError("network '" + net.id + "': arc needs string `token` and number `posterior`");
      const auto token = jarc["token"].get<std::string>();
      const double p = jarc["posterior"].get<double>();
      if (token.empty()) throw FormatError("network '" + net.id + "': empty token");
      if (!std::isfinite(p) || p < 0.0)
        throw FormatError("network '" + net.id + "': invalid posterior for '" + token + "'");
      add_arc(bin, token, p);
    }
    net.bins.push_back(std::move(bin));
  }
  return net;
}

std::vector<ConfusionNetwork> parse_json_networks(std::string_view text) {
  std::vector<ConfusionNetwork> out;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.is_array()) {
      for (const auto& item : j) out.push_back(from_json(item));
    } else {
      out.push_back(from_json(j));
    }
    return out;
  } catch (const nlohmann::json::parse_error&) {
    // fall through to JSON-lines
  }
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    out.push_back(from_json(j));
  }
  return out;
}

ConfusionNetwork normalize(const ConfusionNetwork& net) {
  ConfusionNetwork out = net;
  for (std::size_t i = 0; i < out.bins.size(); ++i) {
    Bin& bin = out.bins[i];
    const double sum = bin.posterior_sum();
    if (bin.arcs.empty() || !(sum > 0.0))
      throw DegenerateBinError("network '" + net.id + "': bin " + std::to_string(i) +
                               " has no posterior mass");
    if (std::abs(sum - 1.0) <= 1e-12) continue;
    for (Arc& arc : bin.arcs) arc.posterior /= sum;
  }
  return out;
}

bool is_normalized(const ConfusionNetwork& net, double tolerance) {
  return std::all_of(net.bins.begin(), net.bins.end(), [&](const Bin& bin) {
    return !bin.arcs.empty() && std::abs(bin.posterior_sum() - 1.0) <= tolerance;
  });
}

ConfusionNetwork truncate(const ConfusionNetwork& net, std::size_t max_bins) {
  ConfusionNetwork out = net;
  if (max_bins != 0 && out.bins.size() > max_bins) out.bins.resize(max_bins);
  return out;
}

PruneResult prune_noise(const ConfusionNetwork& net, const NoiseLexicon& noise,
                        const PruneOptions& options) {
  PruneResult result;
  result.network.id = net.id;
  for (const Bin& bin : net.bins) {
    const bool all_noise = std::all_of(bin.arcs.begin(), bin.arcs.end(),
                                       [&](const Arc& arc) { return noise.contains(arc.token); });
    if (all_noise) {
      ++result.removed_bins;
      continue;
    }
    Bin kept = bin;
    if (options.drop_noise_arcs)
      std::erase_if(kept.arcs, [&](const Arc& arc) { return noise.contains(arc.token); });
    result.network.bins.push_back(std::move(kept));
  }
  result.network = normalize(result.network);
  result.emptied = result.network.empty();
  return result;
}

std::vector<std::string> best_hypothesis(const ConfusionNetwork& net) {
  std::vector<std::string> out;
  for (const Bin& bin : net.bins) {
    if (bin.arcs.empty()) continue;
    const Arc* best = &bin.arcs.front();
    for (const Arc& arc : bin.arcs)
      if (arc.posterior > best->posterior) best = &arc;
    if (best->token != kDeleteToken) out.push_back(best->token);
  }
  return out;
}

ConfusionNetwork from_tokens(std::string id, const std::vector<std::string>& tokens) {
  ConfusionNetwork net{std::move(id), {}};
  for (const auto& t : tokens) net.bins.push_back(Bin{{Arc{t, 1.0}}});
  return net;
}

nlohmann::json NetworkStats::to_json() const {
  return {{"bin_count", bin_count},
          {"max_bin_width", max_bin_width},
          {"mean_bin_width", mean_bin_width},
          {"mean_bin_entropy", mean_bin_entropy}};
}

NetworkStats stats(const ConfusionNetwork& net) {
  NetworkStats s;
  if (net.empty()) return s;
  s.bin_count = net.bins.size();
  double width_sum = 0.0;
  double entropy_sum = 0.0;
  for (const Bin& bin : net.bins) {
    s.max_bin_width = std::max(s.max_bin_width, bin.arcs.size());
    width_sum += static_cast<double>(bin.arcs.size());
    double h = 0.0;
    for (const Arc& arc : bin.arcs)
      if (arc.posterior > 0.0) h -= arc.posterior * std::log(arc.posterior);
    entropy_sum += h;
  }
  s.mean_bin_width = width_sum / static_cast<double>(s.bin_count);
  s.mean_bin_entropy = entropy_sum / static_cast<double>(s.bin_count);
  return s;
}

}  // namespace confnet2seq::confnet
