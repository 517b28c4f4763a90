#include "confnet2seq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "confnet2seq/errors.hpp"
#include "confnet2seq/text.hpp"

namespace confnet2seq::eval {

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

void check_pair(const Corpus& predictions, const Corpus& references, const char* what) {
  if (predictions.empty() || references.empty()) throw ContractError(std::string(what) + ": empty corpus");
  if (predictions.size() != references.size())
    throw ContractError(std::string(what) + ": " + std::to_string(predictions.size()) + " predictions but " +
                        std::to_string(references.size()) + " references");
}

Tokens folded(const Tokens& tokens) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(text::fold_case(t));
  return out;
}

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t matches = 0;
  for (const auto& [gram, count] : hyp) {
    const auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  return matches;
}

std::size_t total(const NgramCounts& counts) {
  std::size_t n = 0;
  for (const auto& kv : counts) n += kv.second;
  return n;
}

double f1(std::size_t overlap, std::size_t hyp_total, std::size_t ref_total) {
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(hyp_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

}  // namespace

double bleu(const Corpus& predictions, const Corpus& references) {
  check_pair(predictions, references, "bleu");
  constexpr std::size_t kOrder = 4;
  std::size_t matches[kOrder] = {}, candidates[kOrder] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const Tokens hyp = folded(predictions[s]), ref = folded(references[s]);
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= kOrder; ++n) {
      const NgramCounts h = ngrams(hyp, n);
      matches[n - 1] += clipped_overlap(h, ngrams(ref, n));
      candidates[n - 1] += total(h);
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < kOrder; ++n) {
    const double p = matches[n] > 0 ? static_cast<double>(matches[n]) / static_cast<double>(candidates[n])
                                    : 1.0 / static_cast<double>(candidates[n] + 1);
    log_precision += std::log(p) / static_cast<double>(kOrder);
  }
  const double bp =
      hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_precision);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge(const Corpus& predictions, const Corpus& references, RougeVariant variant) {
  check_pair(predictions, references, "rouge");
  double sum = 0.0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const Tokens hyp = folded(predictions[s]), ref = folded(references[s]);
    std::size_t overlap = 0, hyp_total = 0, ref_total = 0;
    if (variant == RougeVariant::lcs) {
      overlap = lcs_length(hyp, ref);
      hyp_total = hyp.size();
      ref_total = ref.size();
    } else {
      const std::size_t n = variant == RougeVariant::one ? 1 : 2;
      const NgramCounts h = ngrams(hyp, n), r = ngrams(ref, n);
      overlap = clipped_overlap(h, r);
      hyp_total = total(h);
      ref_total = total(r);
    }
    if (hyp_total == 0 && ref_total == 0)
      sum += hyp == ref ? 1.0 : 0.0;
    else
      sum += f1(overlap, hyp_total, ref_total);
  }
  return 100.0 * sum / static_cast<double>(predictions.size());
}

std::size_t edit_distance(const Tokens& hypothesis, const Tokens& reference) {
  std::vector<std::size_t> prev(reference.size() + 1), cur(reference.size() + 1);
  for (std::size_t j = 0; j <= reference.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= hypothesis.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hypothesis[i - 1] == reference[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[reference.size()];
}

double wer(const Tokens& hypothesis, const Tokens& reference) {
  if (reference.empty()) throw ContractError("wer: empty reference");
  return 100.0 * static_cast<double>(edit_distance(folded(hypothesis), folded(reference))) /
         static_cast<double>(reference.size());
}

double corpus_wer(const Corpus& hypotheses, const Corpus& references) {
  check_pair(hypotheses, references, "wer");
  std::size_t edits = 0, length = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    if (references[s].empty()) throw ContractError("wer: empty reference at sample " + std::to_string(s));
    edits += edit_distance(folded(hypotheses[s]), folded(references[s]));
    length += references[s].size();
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(length);
}

nlohmann::json MetricReport::to_json() const {
  return {{"bleu", bleu},     {"rouge1", rouge1}, {"rouge2", rouge2},
          {"rougeL", rougeL}, {"wer", wer},       {"sample_count", sample_count}};
}

std::string MetricReport::to_text() const {
  std::string out;
  char line[64];
  const std::pair<const char*, double> rows[] = {
      {"BLEU", bleu}, {"ROUGE-1", rouge1}, {"ROUGE-2", rouge2}, {"ROUGE-L", rougeL}, {"WER", wer}};
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof line, "%-8s %8.2f\n", name, value);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-8s %8zu\n", "samples", sample_count);
  return out + line;
}

MetricReport evaluate(const Corpus& predictions, const Corpus& references) {
  check_pair(predictions, references, "evaluate");
  MetricReport r;
  r.bleu = bleu(predictions, references);
  r.rouge1 = rouge(predictions, references, RougeVariant::one);
  r.rouge2 = rouge(predictions, references, RougeVariant::two);
  r.rougeL = rouge(predictions, references, RougeVariant::lcs);
  r.wer = corpus_wer(predictions, references);
  r.sample_count = predictions.size();
  return r;
}

MetricReport evaluate_lines(const std::vector<std::string>& predictions, const std::vector<std::string>& references) {
  Corpus p, r;
  for (const auto& line : predictions) p.push_back(text::tokenize(line));
  for (const auto& line : references) r.push_back(text::tokenize(line));
  return evaluate(p, r);
}

}  // namespace confnet2seq::eval
