#pragma once

// Shared fixtures for the unit and acceptance tests: random networks, toy
// models, an overfitting corpus and a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "confnet2seq/confnet.hpp"
#include "confnet2seq/data.hpp"
#include "confnet2seq/model.hpp"
#include "confnet2seq/tensor.hpp"
#include "confnet2seq/text.hpp"

namespace support {

using namespace confnet2seq;

inline confnet::ConfusionNetwork random_network(std::mt19937_64& rng, std::size_t max_bins, std::size_t max_arcs,
                                                const std::vector<std::string>& words, bool normalized = true,
                                                std::size_t min_bins = 1) {
  std::uniform_int_distribution<std::size_t> nbins(min_bins, max_bins);
  std::uniform_int_distribution<std::size_t> narcs(1, std::min(max_arcs, words.size()));
  std::uniform_real_distribution<double> mass(0.05, 1.0);
  confnet::ConfusionNetwork net;
  net.id = "n" + std::to_string(rng() % 100000);
  const std::size_t n = nbins(rng);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> pool = words;
    std::shuffle(pool.begin(), pool.end(), rng);
    confnet::Bin bin;
    double total = 0.0;
    for (std::size_t j = 0, k = narcs(rng); j < k; ++j) {
      bin.arcs.push_back({pool[j], mass(rng)});
      total += bin.arcs.back().posterior;
    }
    if (normalized)
      for (auto& a : bin.arcs) a.posterior /= total;
    net.bins.push_back(std::move(bin));
  }
  return net;
}

inline std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                                              const std::vector<std::string>& words) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::vector<std::string> out(len(rng));
  for (auto& t : out) t = words[pick(rng)];
  return out;
}

// Eight base words; with the four reserved entries the vocabulary has 12.
inline data::Vocabulary toy_vocab() {
  return data::Vocabulary::from_tokens({"what", "time", "is", "it", "the", "cat", "sat", "on"});
}

inline model::ModelConfig toy_config(std::size_t dim = 8, std::size_t layers = 3) {
  model::ModelConfig c;
  c.embedding_dim = dim;
  c.hidden_size = dim;
  c.layers = layers;
  c.init_range = 0.3;
  return c;
}

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
  // Entries whose gradients were both below the floor, where the error is
  // effectively absolute.
  std::size_t floored = 0;
  double max_rel_unfloored = 0.0;  // over the remaining entries
};

// Analytic gradients from one backward pass against central differences of
// `loss` for every entry of every parameter. Relative error is
// |a - n| / max(|a|, |n|, floor).
inline GradReport check_gradients(const std::function<num::Tensor()>& loss, std::vector<num::NamedTensor> params,
                                  double eps = 1e-5, double floor = 1e-6) {
  for (auto& p : params) p.tensor.zero_grad();
  num::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());

  GradReport report;
  num::NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = loss().item();
      values[i] = orig - eps;
      const double down = loss().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (std::max(std::abs(a), std::abs(numeric)) < floor)
        ++report.floored;
      else
        report.max_rel_unfloored = std::max(report.max_rel_unfloored, rel);
      if (rel > report.max_rel) {
        report.max_rel = rel;
        char buf[96];
        std::snprintf(buf, sizeof buf, "] analytic %.6e numeric %.6e", a, numeric);
        report.worst = params[k].name + "[" + std::to_string(i) + buf;
      }
      ++report.checked;
    }
  }
  return report;
}

// Eight question/answer triples over hand-built networks. Each network holds
// distractor arcs next to the spoken words; one target word ("zanzibar")
// occurs only as a question-network arc, never in the base vocabulary or a
// factoid answer, so it can be produced only by copying.
inline constexpr const char* kCopyOnlyWord = "zanzibar";

struct ToyCorpus {
  data::Dataset dataset;
  data::Vocabulary vocab;
};

inline confnet::Bin bin(std::vector<std::pair<std::string, double>> arcs) {
  confnet::Bin b;
  for (auto& [t, p] : arcs) b.arcs.push_back({t, p});
  return b;
}

inline ToyCorpus overfit_corpus() {
  using B = std::vector<std::pair<std::string, double>>;
  struct Row {
    std::vector<B> bins;
    std::string factoid, answer;
  };
  const std::vector<Row> rows = {
      {{{{"who", 0.9}, {"how", 0.1}}, {{"wrote", 0.85}, {"rode", 0.15}}, {{"hamlet", 0.9}, {"camel", 0.1}}},
       "shakespeare", "shakespeare wrote hamlet"},
      {{{{"where", 0.8}, {"wear", 0.2}}, {{"is", 1.0}}, {{"paris", 0.9}, {"parents", 0.05}, {"[noise]", 0.05}}},
       "france", "paris is in france"},
      {{{{"what", 0.9}, {"watt", 0.1}}, {{"color", 0.85}, {"collar", 0.15}}, {{"is", 1.0}}, {{"snow", 0.9}, {"so", 0.1}}},
       "white", "snow is white"},
      {{{{"when", 0.85}, {"win", 0.15}}, {{"did", 1.0}}, {{"rome", 0.9}, {"roam", 0.1}}, {{"fall", 0.9}, {"fail", 0.1}}},
       "476", "rome fell in 476"},
      {{{{"who", 0.95}, {"hoo", 0.05}}, {{"painted", 0.9}, {"pointed", 0.1}}, {{"guernica", 0.85}, {"america", 0.15}}},
       "picasso", "picasso painted guernica"},
      {{{{"how", 0.9}, {"who", 0.1}}, {{"tall", 0.9}, {"tell", 0.1}}, {{"is", 1.0}}, {{"everest", 0.9}, {"ever", 0.1}}},
       "8848 meters", "everest is 8848 meters tall"},
      {{{{"is", 0.9}, {"as", 0.1}}, {{"zanzibar", 0.7}, {"sansibar", 0.3}}, {{"known", 0.8}, {"gnome", 0.2}},
        {{"for", 1.0}}, {{"cloves", 0.9}, {"gloves", 0.1}}},
       "spices", "zanzibar has spices"},
      {{{{"which", 0.9}, {"witch", 0.1}}, {{"planet", 0.9}, {"plant", 0.1}}, {{"is", 1.0}}, {{"red", 0.85}, {"read", 0.15}}},
       "mars", "mars is red"},
  };

  ToyCorpus corpus;
  std::size_t k = 0;
  for (const auto& r : rows) {
    data::Sample s;
    s.id = "toy" + std::to_string(k++);
    for (const auto& b : r.bins) s.question_net.bins.push_back(bin(b));
    s.question_net.id = s.id;
    s.factoid_answer = text::tokenize(r.factoid);
    s.full_answer = text::tokenize(r.answer);
    corpus.dataset.samples.push_back(std::move(s));
  }
  // The copy-only word is kept out of the base vocabulary.
  std::vector<std::string> tokens = data::build_vocab(corpus.dataset).tokens();
  tokens.erase(std::remove(tokens.begin(), tokens.end(), std::string(kCopyOnlyWord)), tokens.end());
  corpus.vocab = data::Vocabulary::from_tokens(tokens);
  return corpus;
}

}  // namespace support
