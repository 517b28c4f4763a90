#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <random>

#include "confnet2seq/errors.hpp"
#include "confnet2seq/eval.hpp"
#include "confnet2seq/text.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace confnet2seq;
using eval::Corpus;
using eval::RougeVariant;
using eval::Tokens;

namespace {

Tokens toks(const std::string& s) { return text::tokenize(s); }

// Every string over {a, b, c} of length <= 6.
std::vector<Tokens> all_strings(std::size_t max_len) {
  std::vector<Tokens> out{{}};
  for (std::size_t start = 0; start < out.size(); ++start) {
    if (out[start].size() == max_len) continue;
    for (const char* s : {"a", "b", "c"}) {
      Tokens t = out[start];
      t.push_back(s);
      out.push_back(std::move(t));
    }
  }
  return out;
}

// Shortest path from `source` under single-token insert/delete/substitute.
// Optimal edit scripts never need strings longer than the longer endpoint,
// so bounding the search at `max_len` is exact.
std::map<Tokens, std::size_t> bfs_distances(const Tokens& source, std::size_t max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c"};
  std::map<Tokens, std::size_t> dist{{source, 0}};
  std::deque<Tokens> queue{source};
  while (!queue.empty()) {
    const Tokens cur = queue.front();
    queue.pop_front();
    const std::size_t d = dist[cur];
    std::vector<Tokens> next;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      Tokens del = cur;
      del.erase(del.begin() + static_cast<std::ptrdiff_t>(i));
      next.push_back(std::move(del));
      for (const auto& a : alphabet) {
        Tokens sub = cur;
        sub[i] = a;
        next.push_back(std::move(sub));
      }
    }
    if (cur.size() < max_len)
      for (std::size_t i = 0; i <= cur.size(); ++i)
        for (const auto& a : alphabet) {
          Tokens ins = cur;
          ins.insert(ins.begin() + static_cast<std::ptrdiff_t>(i), a);
          next.push_back(std::move(ins));
        }
    for (auto& n : next)
      if (dist.emplace(n, d + 1).second) queue.push_back(std::move(n));
  }
  return dist;
}

std::size_t longest_common_substring(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t k = 0;
      while (i + k < a.size() && j + k < b.size() && a[i + k] == b[j + k]) ++k;
      best = std::max(best, k);
    }
  return best;
}

const std::vector<std::string> kWords = {"a", "b", "c", "d", "the", "cat"};

}  // namespace

TEST_CASE("identical and disjoint corpora") {
  const Corpus same = {toks("the cat sat on the mat"), toks("who wrote hamlet")};
  const auto r = eval::evaluate(same, same);
  CHECK(r.bleu == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.rouge1 == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.rouge2 == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.rougeL == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.wer == 0.0);
  CHECK(r.sample_count == 2);

  const Corpus other = {toks("x y z w v u"), toks("p q r")};
  const auto d = eval::evaluate(other, same);
  CHECK(d.bleu == 0.0);
  CHECK(d.rouge1 == 0.0);
  CHECK(d.rouge2 == 0.0);
  CHECK(d.rougeL == 0.0);
  CHECK(d.wer == doctest::Approx(100.0));
}

TEST_CASE("bleu by hand") {
  // Matches 5/6, 3/5, 2/4, 1/3; equal lengths so no brevity penalty.
  const double expect = 100.0 * std::pow(5.0 / 6 * 3.0 / 5 * 2.0 / 4 * 1.0 / 3, 0.25);
  CHECK(eval::bleu({toks("the cat sat on the mat")}, {toks("the cat sat on a mat")}) ==
        doctest::Approx(expect).epsilon(1e-12));

  // Clipping: seven "the"s against a reference holding two earn two matches.
  const double p1 = 2.0 / 7, p2 = 1.0 / 7, p3 = 1.0 / 6, p4 = 1.0 / 5;  // unmatched orders are add-one smoothed
  CHECK(eval::bleu({toks("the the the the the the the")}, {toks("the cat the mat")}) ==
        doctest::Approx(100.0 * std::pow(p1 * p2 * p3 * p4, 0.25)).epsilon(1e-12));

  // A short candidate is penalised by exp(1 - r/c).
  const double bp = std::exp(1.0 - 4.0 / 2.0);
  CHECK(eval::bleu({toks("the cat")}, {toks("the cat sat down")}) ==
        doctest::Approx(100.0 * bp * std::pow(1.0 * 1.0 * 1.0 * 1.0, 0.25)).epsilon(1e-12));
  CHECK(eval::bleu({toks("")}, {toks("a")}) == 0.0);
  CHECK(eval::bleu({toks("The CAT")}, {toks("the cat")}) == doctest::Approx(100.0));
}

TEST_CASE("rouge by hand") {
  CHECK(eval::rouge({toks("a b c")}, {toks("a c")}, RougeVariant::lcs) == doctest::Approx(80.0).epsilon(1e-14));
  CHECK(eval::rouge({toks("a b c")}, {toks("a c")}, RougeVariant::one) == doctest::Approx(80.0).epsilon(1e-14));
  CHECK(eval::rouge({toks("a b c")}, {toks("a c")}, RougeVariant::two) == 0.0);
  // Per-sample averaging.
  CHECK(eval::rouge({toks("a b"), toks("x")}, {toks("a b"), toks("y")}, RougeVariant::one) == doctest::Approx(50.0));
  // Single tokens have no bigrams: identical scores 1, different scores 0.
  CHECK(eval::rouge({toks("a")}, {toks("a")}, RougeVariant::two) == doctest::Approx(100.0));
  CHECK(eval::rouge({toks("a")}, {toks("b")}, RougeVariant::two) == 0.0);
  CHECK(eval::lcs_length(toks("a b c d"), toks("c d a b")) == 2);
}

TEST_CASE("golden metrics") {
  std::ifstream in(std::string(TEST_DATA_DIR) + "/metric_golden.json");
  REQUIRE(in);
  const auto golden = nlohmann::json::parse(in);
  std::vector<std::string> preds, refs;
  for (const auto& p : golden["pairs"]) {
    preds.push_back(p["prediction"]);
    refs.push_back(p["reference"]);
  }
  const auto report = eval::evaluate_lines(preds, refs);
  CHECK(report.bleu == doctest::Approx(golden["corpus"]["bleu"].get<double>()).epsilon(1e-12));
  CHECK(report.rouge1 == doctest::Approx(golden["corpus"]["rouge1"].get<double>()).epsilon(1e-12));
  CHECK(report.rouge2 == doctest::Approx(golden["corpus"]["rouge2"].get<double>()).epsilon(1e-12));
  CHECK(report.rougeL == doctest::Approx(golden["corpus"]["rougeL"].get<double>()).epsilon(1e-12));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Corpus p = {toks(preds[i])}, r = {toks(refs[i])};
    const auto& g = golden["per_pair"][i];
    INFO("pair " << i);
    CHECK(eval::bleu(p, r) == doctest::Approx(g["bleu"].get<double>()).epsilon(1e-12));
    CHECK(eval::rouge(p, r, RougeVariant::one) == doctest::Approx(g["rouge1"].get<double>()).epsilon(1e-12));
    CHECK(eval::rouge(p, r, RougeVariant::two) == doctest::Approx(g["rouge2"].get<double>()).epsilon(1e-12));
    CHECK(eval::rouge(p, r, RougeVariant::lcs) == doctest::Approx(g["rougeL"].get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("rouge properties") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tokens h = support::random_tokens(rng, 0, 8, kWords), r = support::random_tokens(rng, 0, 8, kWords);
    const double r1 = eval::rouge({h}, {r}, RougeVariant::one);
    const double rl = eval::rouge({h}, {r}, RougeVariant::lcs);
    // LCS is a subset of the clipped unigram overlap over the same lengths.
    CHECK(r1 >= rl - 1e-12);
    CHECK(eval::lcs_length(h, r) >= longest_common_substring(h, r));
    CHECK(eval::lcs_length(h, r) == eval::lcs_length(r, h));
    CHECK(eval::lcs_length(h, r) <= std::min(h.size(), r.size()));
    for (auto v : {RougeVariant::one, RougeVariant::two, RougeVariant::lcs}) {
      const double s = eval::rouge({h}, {r}, v);
      CHECK(s >= 0.0);
      CHECK(s <= 100.0 + 1e-12);
      // F1 is symmetric in its arguments.
      CHECK(s == doctest::Approx(eval::rouge({r}, {h}, v)).epsilon(1e-14));
    }
  }
}

TEST_CASE("edit distance against breadth-first search") {
  const auto strings = all_strings(6);
  REQUIRE(strings.size() == 1093);
  std::size_t checked = 0, wrong = 0;
  // Every reference of length <= 3 against every hypothesis of length <= 6,
  // plus a stride through the longer references.
  for (std::size_t ri = 0; ri < strings.size(); ri += (strings[ri].size() <= 3 ? 1 : 37)) {
    const auto dist = bfs_distances(strings[ri], 6);
    for (const auto& h : strings) {
      ++checked;
      // BFS runs from the reference; distance is symmetric.
      if (eval::edit_distance(h, strings[ri]) != dist.at(h)) ++wrong;
    }
  }
  CHECK(checked > 50000);
  CHECK(wrong == 0);
}

TEST_CASE("wer properties") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tokens a = support::random_tokens(rng, 1, 7, kWords), b = support::random_tokens(rng, 1, 7, kWords),
                 c = support::random_tokens(rng, 1, 7, kWords);
    CHECK(eval::wer(a, a) == 0.0);
    CHECK(eval::edit_distance(a, c) <= eval::edit_distance(a, b) + eval::edit_distance(b, c));
    CHECK(eval::edit_distance(a, b) == eval::edit_distance(b, a));
    CHECK(eval::edit_distance(a, b) >= (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()));
    CHECK(eval::edit_distance(a, b) <= std::max(a.size(), b.size()));
    // One more hypothesis token changes the distance by at most one.
    Tokens longer = a;
    longer.push_back("zzz");
    CHECK(eval::edit_distance(longer, b) <= eval::edit_distance(a, b) + 1);
    CHECK(eval::edit_distance(longer, b) + 1 >= eval::edit_distance(a, b));
    // Corrupting one token of a perfect hypothesis costs exactly one edit.
    Tokens corrupted = b;
    corrupted[rng() % corrupted.size()] = "zzz";
    CHECK(eval::wer(corrupted, b) == doctest::Approx(100.0 / static_cast<double>(b.size())));
  }
  CHECK(eval::wer(toks("What TIME"), toks("what time")) == 0.0);
  CHECK(eval::wer(toks(""), toks("a b")) == doctest::Approx(100.0));
  CHECK(eval::wer(toks("a b c d"), toks("a b")) == doctest::Approx(100.0));
}

TEST_CASE("corpus metrics are order invariant") {
  std::mt19937_64 rng(13);
  Corpus p, r;
  for (int i = 0; i < 30; ++i) {
    p.push_back(support::random_tokens(rng, 1, 6, kWords));
    r.push_back(support::random_tokens(rng, 1, 6, kWords));
  }
  const auto base = eval::evaluate(p, r);
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Corpus ps, rs;
  for (auto i : order) {
    ps.push_back(p[i]);
    rs.push_back(r[i]);
  }
  const auto shuffled = eval::evaluate(ps, rs);
  CHECK(shuffled.bleu == doctest::Approx(base.bleu).epsilon(1e-12));
  CHECK(shuffled.rouge1 == doctest::Approx(base.rouge1).epsilon(1e-12));
  CHECK(shuffled.rouge2 == doctest::Approx(base.rouge2).epsilon(1e-12));
  CHECK(shuffled.rougeL == doctest::Approx(base.rougeL).epsilon(1e-12));
  CHECK(shuffled.wer == doctest::Approx(base.wer).epsilon(1e-12));

  // Pooled WER weights samples by reference length.
  std::size_t edits = 0, len = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    edits += eval::edit_distance(p[i], r[i]);
    len += r[i].size();
  }
  CHECK(base.wer == doctest::Approx(100.0 * static_cast<double>(edits) / static_cast<double>(len)));
}

TEST_CASE("contract errors") {
  CHECK_THROWS_AS(eval::bleu({}, {}), ContractError);
  CHECK_THROWS_AS(eval::rouge({toks("a")}, {}, RougeVariant::one), ContractError);
  CHECK_THROWS_AS(eval::evaluate({toks("a"), toks("b")}, {toks("a")}), ContractError);
  CHECK_THROWS_AS(eval::wer(toks("a"), toks("")), ContractError);
  CHECK_THROWS_AS(eval::corpus_wer({toks("a")}, {toks("")}), ContractError);
  CHECK_THROWS_AS(eval::evaluate_lines({}, {}), ContractError);
}

TEST_CASE("report formatting") {
  const auto r = eval::evaluate_lines({"a b c", "the cat"}, {"a c", "the cat"});
  const auto j = r.to_json();
  for (const char* key : {"bleu", "rouge1", "rouge2", "rougeL", "wer", "sample_count"}) CHECK(j.contains(key));
  CHECK(j["sample_count"] == 2);
  CHECK(j["rougeL"].get<double>() == doctest::Approx(90.0));
  const std::string t = r.to_text();
  CHECK(t.find("ROUGE-L     90.00") != std::string::npos);
  CHECK(t.find("samples") != std::string::npos);
  CHECK(std::count(t.begin(), t.end(), '\n') == 6);
}
