#pragma once

// Corpus metrics for generated answers. All scores are percentages; tokens
// are case-folded before comparison.
//
// BLEU is corpus-level BLEU-4: clipped n-gram matches and candidate n-gram
// counts are summed over the corpus, combined by geometric mean, and scaled
// by the brevity penalty exp(1 - r/c) when c <= r. A zero unigram match
// count gives 0. For n >= 2 an order with no matches is add-one smoothed to
// 1 / (candidates + 1), so short corpora are not zeroed by missing 4-grams.
//
// ROUGE-1/2 are per-sample F1 over clipped n-gram overlap and ROUGE-L is
// per-sample F1 over the longest common subsequence, averaged over samples.
// A pair where neither side has an n-gram of the order scores 1 when the two
// sequences are identical and 0 otherwise.
//
// WER is token-level Levenshtein distance over reference length; the corpus
// figure pools edits and reference lengths.

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace confnet2seq::eval {

using Tokens = std::vector<std::string>;
using Corpus = std::vector<Tokens>;

enum class RougeVariant { one, two, lcs };

double bleu(const Corpus& predictions, const Corpus& references);
double rouge(const Corpus& predictions, const Corpus& references, RougeVariant variant);

// Minimum substitutions + insertions + deletions turning `hypothesis` into
// `reference`.
std::size_t edit_distance(const Tokens& hypothesis, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

double wer(const Tokens& hypothesis, const Tokens& reference);
double corpus_wer(const Corpus& hypotheses, const Corpus& references);

struct MetricReport {
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double wer = 0.0;
  std::size_t sample_count = 0;

  nlohmann::json to_json() const;
  // Aligned two-column table.
  std::string to_text() const;
};

MetricReport evaluate(const Corpus& predictions, const Corpus& references);
// Lines are tokenized (lowercase, whitespace split).
MetricReport evaluate_lines(const std::vector<std::string>& predictions, const std::vector<std::string>& references);

}  // namespace confnet2seq::eval
