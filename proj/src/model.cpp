#include "confnet2seq/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::model {

namespace ops = num;

void ModelConfig::validate() const {
  if (embedding_dim == 0 || hidden_size == 0 || layers == 0)
    throw ContractError("model dimensions and layer count must be positive");
  if (!(init_range > 0.0)) throw ContractError("init_range must be > 0");
  if (max_length == 0) throw ContractError("max_length must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"embedding_dim", embedding_dim}, {"hidden_size", hidden_size}, {"layers", layers},
          {"attention_dim", attention_dim}, {"init_range", init_range},   {"max_bins", max_bins},
          {"max_arcs", max_arcs},           {"max_length", max_length}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.layers = j.value("layers", c.layers);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.init_range = j.value("init_range", c.init_range);
  c.max_bins = j.value("max_bins", c.max_bins);
  c.max_arcs = j.value("max_arcs", c.max_arcs);
  c.max_length = j.value("max_length", c.max_length);
  c.validate();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::size_t vocab_size, std::mt19937_64& rng) {
  config.validate();
  const std::size_t E = config.embedding_dim, H = config.hidden_size, A = config.attention_size();
  const double r = config.init_range;
  ModelParams p;
  p.confnet = encoder::ConfNetEncoderParams::init(vocab_size, E, r, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? E : 2 * H;
    p.encoder.forward.push_back(num::LstmCellParams::init(in, H, r, rng));
    p.encoder.backward.push_back(num::LstmCellParams::init(in, H, r, rng));
  }
  for (std::size_t l = 0; l < config.layers; ++l)
    p.decoder.push_back(num::LstmCellParams::init(l == 0 ? E : H, H, r, rng));
  p.attention.W_h = Tensor::uniform({A, 2 * H}, r, rng);
  p.attention.W_s = Tensor::uniform({A, H}, r, rng);
  p.attention.v = Tensor::uniform({A}, r, rng);
  p.attention.b = Tensor::uniform({A}, r, rng);
  p.generator.W = Tensor::uniform({vocab_size, 3 * H}, r, rng);
  p.generator.b = Tensor::uniform({vocab_size}, r, rng);
  p.pgen.w_c = Tensor::uniform({2 * H}, r, rng);
  p.pgen.w_s = Tensor::uniform({H}, r, rng);
  p.pgen.w_x = Tensor::uniform({E}, r, rng);
  p.pgen.b = Tensor::uniform({1}, r, rng);
  return p;
}

std::vector<num::NamedTensor> ModelParams::named() const {
  std::vector<num::NamedTensor> out;
  const auto add_cell = [&](const std::string& prefix, const num::LstmCellParams& c) {
    out.push_back({prefix + ".W", c.W});
    out.push_back({prefix + ".U", c.U});
    out.push_back({prefix + ".b", c.b});
  };
  out.push_back({"embedding", confnet.embedding_table});
  out.push_back({"confnet.W1", confnet.W1});
  out.push_back({"confnet.W2", confnet.W2});
  for (std::size_t l = 0; l < encoder.forward.size(); ++l) {
    add_cell("encoder.l" + std::to_string(l) + ".fwd", encoder.forward[l]);
    add_cell("encoder.l" + std::to_string(l) + ".bwd", encoder.backward[l]);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) add_cell("decoder.l" + std::to_string(l), decoder[l]);
  out.push_back({"attention.W_h", attention.W_h});
  out.push_back({"attention.W_s", attention.W_s});
  out.push_back({"attention.v", attention.v});
  out.push_back({"attention.b", attention.b});
  out.push_back({"generator.W", generator.W});
  out.push_back({"generator.b", generator.b});
  out.push_back({"pgen.w_c", pgen.w_c});
  out.push_back({"pgen.w_s", pgen.w_s});
  out.push_back({"pgen.w_x", pgen.w_x});
  out.push_back({"pgen.b", pgen.b});
  return out;
}

// ---------------------------------------------------------------------------
// Extended vocabulary

ExtendedVocabulary::ExtendedVocabulary(const data::Vocabulary& base, const confnet::ConfusionNetwork& net,
                                       const std::vector<std::string>& answer)
    : base_(&base) {
  const auto consider = [&](const std::string& token) {
    if (base.contains(token) || extra_index_.count(token)) return;
    extra_index_.emplace(token, base.size() + extra_.size());
    extra_.push_back(token);
  };
  for (const auto& bin : net.bins)
    for (const auto& arc : bin.arcs) consider(arc.token);
  for (const auto& t : answer) consider(t);
}

std::optional<std::size_t> ExtendedVocabulary::find(const std::string& token) const {
  if (auto i = base_->find(token)) return i;
  const auto it = extra_index_.find(token);
  if (it == extra_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ExtendedVocabulary::require(const std::string& token) const {
  if (auto i = find(token)) return *i;
  throw DataError("target token '" + token + "' is absent from the extended vocabulary");
}

const std::string& ExtendedVocabulary::token(std::size_t index) const {
  if (index < base_->size()) return base_->token(index);
  if (index - base_->size() < extra_.size()) return extra_[index - base_->size()];
  throw IndexError("extended vocabulary index " + std::to_string(index) + " out of range");
}

std::size_t ExtendedVocabulary::input_index(std::size_t index) const {
  return index < base_->size() ? index : data::Vocabulary::kUnk;
}

std::vector<std::size_t> ExtendedVocabulary::target_ids(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(find(t).value_or(data::Vocabulary::kUnk));
  return ids;
}

StepDistribution StepDistribution::from(const StepOutput& step) {
  StepDistribution d;
  d.attn.assign(step.attn.values().begin(), step.attn.values().end());
  d.p_gen = step.p_gen.item();
  d.p_vocab.assign(step.p_vocab.values().begin(), step.p_vocab.values().end());
  d.p_final.assign(step.p_final.values().begin(), step.p_final.values().end());
  return d;
}

// ---------------------------------------------------------------------------
// Copy distributions and mixture (plain arithmetic)

TokenDistribution copy_confnet(std::span<const double> attn_question, const confnet::ConfusionNetwork& net) {
  if (attn_question.size() != net.size())
    throw ContractError("copy_confnet: " + std::to_string(attn_question.size()) + " attention weights for " +
                        std::to_string(net.size()) + " bins");
  TokenDistribution out;
  for (std::size_t i = 0; i < net.size(); ++i)
    for (const auto& arc : net.bins[i].arcs) out[arc.token] += attn_question[i] * arc.posterior;
  return out;
}

TokenDistribution copy_answer(std::span<const double> attn_answer, const std::vector<std::string>& answer) {
  if (attn_answer.size() != answer.size())
    throw ContractError("copy_answer: " + std::to_string(attn_answer.size()) + " attention weights for " +
                        std::to_string(answer.size()) + " tokens");
  TokenDistribution out;
  for (std::size_t k = 0; k < answer.size(); ++k) out[answer[k]] += attn_answer[k];
  return out;
}

std::vector<double> final_distribution(double p_gen, std::span<const double> p_vocab, const TokenDistribution& copy_cn,
                                       const TokenDistribution& copy_ans, const ExtendedVocabulary& ext) {
  if (p_vocab.size() != ext.base_size())
    throw ContractError("final_distribution: P_vocab has " + std::to_string(p_vocab.size()) +
                        " entries, base vocabulary " + std::to_string(ext.base_size()));
  std::vector<double> out(ext.size(), 0.0);
  for (std::size_t w = 0; w < p_vocab.size(); ++w) out[w] = p_gen * p_vocab[w];
  std::vector<double> copy(ext.size(), 0.0);
  for (const auto* dist : {&copy_cn, &copy_ans})
    for (const auto& [token, mass] : *dist) {
      const auto idx = ext.find(token);
      if (!idx) throw ContractError("final_distribution: copy token '" + token + "' has no extended index");
      copy[*idx] += mass;
    }
  for (std::size_t w = 0; w < out.size(); ++w) out[w] += (1.0 - p_gen) * copy[w];
  return out;
}

Tensor global_attention(const Tensor& h_S, const Tensor& s_t, const AttentionParams& params) {
  if (h_S.rank() != 2) throw ShapeError("global_attention: h_S must be a matrix, got " + num::shape_string(h_S.shape()));
  const Tensor keys = ops::matmul(h_S, ops::transpose(params.W_h));
  const Tensor query = ops::add(ops::matmul(params.W_s, s_t), params.b);
  return ops::softmax(ops::matmul(ops::tanh(ops::add_row(keys, query)), params.v));
}

Tensor nll_loss(std::span<const Tensor> step_distributions, std::span<const std::size_t> targets) {
  if (step_distributions.size() != targets.size())
    throw ContractError("nll_loss: " + std::to_string(step_distributions.size()) + " steps but " +
                        std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw ContractError("nll_loss: empty target sequence");
  std::vector<Tensor> terms;
  terms.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] >= step_distributions[t].size())
      throw DataError("nll_loss: target index " + std::to_string(targets[t]) + " at step " + std::to_string(t) +
                      " is outside the extended vocabulary (size " + std::to_string(step_distributions[t].size()) +
                      ")");
    terms.push_back(ops::log(ops::clamp_min(ops::pick(step_distributions[t], targets[t]), 1e-12)));
  }
  return ops::affine(ops::mean(terms), -1.0);
}

double Hypothesis::normalized_score() const {
  return ids.empty() ? 0.0 : log_prob / static_cast<double>(ids.size());
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config, data::Vocabulary vocab, ModelParams params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  config_.validate();
  if (params_.embeddings().dim(0) != vocab_.size())
    throw CompatibilityError("embedding rows (" + std::to_string(params_.embeddings().dim(0)) +
                             ") differ from vocabulary size (" + std::to_string(vocab_.size()) + ")");
}

Model Model::create(const ModelConfig& config, data::Vocabulary vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params = ModelParams::init(config, vocab.size(), rng);
  return Model(config, std::move(vocab), std::move(params));
}

SourceContext Model::prepare(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer) const {
  if (net.empty()) throw ContractError("question network '" + net.id + "' has no bins");
  if (answer.empty() || answer.size() > config_.max_length)
    throw ContractError("factoid answer must hold 1.." + std::to_string(config_.max_length) + " tokens, got " +
                        std::to_string(answer.size()));
  if (!confnet::is_normalized(net)) throw ContractError("question network '" + net.id + "' is not normalized");
  SourceContext ctx{net, answer, ExtendedVocabulary(vocab_, net, answer), {}};
  for (std::size_t i = 0; i < net.size(); ++i)
    for (const auto& arc : net.bins[i].arcs) ctx.copy_entries.push_back({i, arc.posterior, *ctx.ext.find(arc.token)});
  for (std::size_t k = 0; k < answer.size(); ++k)
    ctx.copy_entries.push_back({net.size() + k, 1.0, *ctx.ext.find(answer[k])});
  return ctx;
}

std::pair<std::vector<Tensor>, DecoderState> Model::run_encoder(const std::vector<Tensor>& inputs,
                                                                const ForwardMode& mode) const {
  if (inputs.empty()) throw ContractError("run_encoder: empty input sequence");
  const std::size_t L = config_.layers, H = config_.hidden_size;
  std::vector<Tensor> xs = inputs;
  DecoderState finals(L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t T = xs.size();
    std::vector<Tensor> fwd(T), bwd(T);
    num::LstmState f = num::zero_state(H);
    for (std::size_t t = 0; t < T; ++t) {
      f = num::lstm_cell(xs[t], f.h, f.c, params_.encoder.forward[l]);
      fwd[t] = f.h;
    }
    num::LstmState b = num::zero_state(H);
    for (std::size_t t = T; t-- > 0;) {
      b = num::lstm_cell(xs[t], b.h, b.c, params_.encoder.backward[l]);
      bwd[t] = b.h;
    }
    finals[l] = {ops::add(f.h, b.h), ops::add(f.c, b.c)};
    std::vector<Tensor> outs(T);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor pair[] = {fwd[t], bwd[t]};
      outs[t] = ops::concat(pair);
      if (mode.active() && l + 1 < L) outs[t] = ops::dropout(outs[t], mode.dropout, *mode.rng);
    }
    xs = std::move(outs);
  }
  return {std::move(xs), std::move(finals)};
}

EncoderOutputs Model::encode(const SourceContext& ctx, const ForwardMode& mode) const {
  EncoderOutputs out;
  std::vector<Tensor> betas;
  for (auto& bin : encoder::encode_network(ctx.net, vocab_, params_.confnet)) betas.push_back(std::move(bin.beta));
  std::vector<Tensor> answer_inputs;
  for (const auto& t : ctx.answer) answer_inputs.push_back(ops::embedding_lookup(params_.embeddings(), vocab_.index(t)));

  auto [h_q, final_q] = run_encoder(betas, mode);
  auto [h_a, final_a] = run_encoder(answer_inputs, mode);
  out.h_Q = std::move(h_q);
  out.h_A = std::move(h_a);
  for (std::size_t l = 0; l < config_.layers; ++l)
    out.init_state.push_back({ops::add(final_q[l].h, final_a[l].h), ops::add(final_q[l].c, final_a[l].c)});
  std::vector<Tensor> stacked = out.h_Q;
  stacked.insert(stacked.end(), out.h_A.begin(), out.h_A.end());
  out.h_S = ops::stack_rows(stacked);
  out.keys = ops::matmul(out.h_S, ops::transpose(params_.attention.W_h));
  return out;
}

EncoderOutputs Model::encode_sample(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer) const {
  return encode(prepare(net, answer));
}

StepOutput Model::decode_step(const DecoderState& state, std::size_t prev_token, const EncoderOutputs& enc,
                              const SourceContext& ctx, const ForwardMode& mode) const {
  const std::size_t L = config_.layers;
  if (state.size() != L) throw ContractError("decode_step: decoder state has the wrong layer count");
  if (prev_token >= ctx.ext.size())
    throw IndexError("decode_step: previous token " + std::to_string(prev_token) + " outside extended vocabulary");
  StepOutput out;
  const Tensor x = ops::embedding_lookup(params_.embeddings(), ctx.ext.input_index(prev_token));
  Tensor input = x;
  out.state.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    out.state[l] = num::lstm_cell(input, state[l].h, state[l].c, params_.decoder[l]);
    input = out.state[l].h;
    if (mode.active() && l + 1 < L) input = ops::dropout(input, mode.dropout, *mode.rng);
  }
  const Tensor& s = out.state[L - 1].h;
  const auto& att = params_.attention;
  const Tensor query = ops::add(ops::matmul(att.W_s, s), att.b);
  out.attn = ops::softmax(ops::matmul(ops::tanh(ops::add_row(enc.keys, query)), att.v));
  out.context = ops::matmul(out.attn, enc.h_S);

  const Tensor features[] = {s, out.context};
  out.p_vocab = ops::softmax(ops::add(ops::matmul(params_.generator.W, ops::concat(features)), params_.generator.b));
  const Tensor switch_terms[] = {ops::dot(params_.pgen.w_c, out.context), ops::dot(params_.pgen.w_s, s),
                                 ops::dot(params_.pgen.w_x, x), params_.pgen.b};
  out.p_gen = ops::sigmoid(ops::add_n(switch_terms));

  const Tensor copy = ops::weighted_scatter(out.attn, ctx.copy_entries, ctx.ext.size());
  Tensor generated = out.p_vocab;
  if (!ctx.ext.extra().empty()) {
    const Tensor parts[] = {out.p_vocab, Tensor::zeros({ctx.ext.extra().size()})};
    generated = ops::concat(parts);
  }
  out.p_final = ops::add(ops::scale_by(out.p_gen, generated), ops::scale_by(ops::affine(out.p_gen, -1.0, 1.0), copy));
  return out;
}

std::vector<Tensor> Model::teacher_forced(const SourceContext& ctx, const EncoderOutputs& enc,
                                          std::span<const std::size_t> targets, const ForwardMode& mode) const {
  std::vector<Tensor> dists;
  dists.reserve(targets.size());
  DecoderState state = enc.init_state;
  std::size_t prev = data::Vocabulary::kBos;
  for (std::size_t target : targets) {
    StepOutput step = decode_step(state, prev, enc, ctx, mode);
    dists.push_back(std::move(step.p_final));
    state = std::move(step.state);
    prev = target;
  }
  return dists;
}

Tensor Model::sample_loss(const data::Sample& sample, const ForwardMode& mode) const {
  const SourceContext ctx = prepare(sample.question_net, sample.factoid_answer);
  const EncoderOutputs enc = encode(ctx, mode);
  std::vector<std::size_t> targets = ctx.ext.target_ids(sample.full_answer);
  targets.push_back(data::Vocabulary::kEos);
  return nll_loss(teacher_forced(ctx, enc, targets, mode), targets);
}

Tensor Model::batch_loss(const data::Dataset& dataset, const data::Batch& batch, const ForwardMode& mode) const {
  if (batch.size() == 0) throw ContractError("batch_loss: empty batch");
  const auto real = [](const std::vector<bool>& row) {
    return static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  };
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const data::Sample& full = dataset.samples.at(batch.samples[r]);
    const std::size_t n = real(batch.question_mask.at(r));
    const std::size_t m = real(batch.factoid_mask.at(r));
    const std::size_t t = real(batch.target_mask.at(r));
    if (n == 0 || m == 0 || t == 0 || n > full.question_net.size() || m > full.factoid_answer.size() ||
        t > full.full_answer.size() + 1)
      throw ContractError("batch_loss: masks of row " + std::to_string(r) + " disagree with sample '" + full.id + "'");
    data::Sample row = full;
    row.question_net.bins.resize(n);
    row.factoid_answer.resize(m);
    row.full_answer.resize(t - 1);
    losses.push_back(sample_loss(row, mode));
  }
  return ops::mean(losses);
}

double Model::sequence_log_prob(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                                const std::vector<std::string>& tokens) const {
  num::NoGradGuard no_grad;
  const SourceContext ctx = prepare(net, answer);
  const EncoderOutputs enc = encode(ctx);
  std::vector<std::size_t> targets = ctx.ext.target_ids(tokens);
  targets.push_back(data::Vocabulary::kEos);
  double total = 0.0;
  const auto dists = teacher_forced(ctx, enc, targets);
  for (std::size_t t = 0; t < targets.size(); ++t) total += std::log(std::max(dists[t].at(targets[t]), 1e-300));
  return total;
}

namespace {

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

// Indices of the k largest entries; ties resolve to the lower index.
std::vector<std::size_t> top_k(std::span<const double> p, std::size_t k) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  idx.resize(k);
  return idx;
}

}  // namespace

Hypothesis Model::greedy_decode(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                                std::size_t max_length) const {
  num::NoGradGuard no_grad;
  const SourceContext ctx = prepare(net, answer);
  const EncoderOutputs enc = encode(ctx);
  Hypothesis hyp;
  DecoderState state = enc.init_state;
  std::size_t prev = data::Vocabulary::kBos;
  for (std::size_t t = 0; t < max_length; ++t) {
    StepOutput step = decode_step(state, prev, enc, ctx);
    const auto p = step.p_final.values();
    const std::size_t best = top_k(p, 1).front();
    hyp.log_prob += safe_log(p[best]);
    hyp.ids.push_back(best);
    if (best == data::Vocabulary::kEos) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(ctx.ext.token(best));
    state = std::move(step.state);
    prev = best;
  }
  return hyp;
}

Hypothesis Model::beam_decode(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                              std::size_t beam_width, std::size_t max_length) const {
  if (beam_width == 0) throw ContractError("beam_width must be >= 1");
  num::NoGradGuard no_grad;
  const SourceContext ctx = prepare(net, answer);
  const EncoderOutputs enc = encode(ctx);

  struct Live {
    Hypothesis hyp;
    DecoderState state;
    std::size_t prev;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    std::size_t token;
    double token_log_prob;
  };
  std::vector<Live> live{{Hypothesis{}, enc.init_state, data::Vocabulary::kBos}};
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_length && !live.empty() && finished.size() < beam_width; ++t) {
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      StepOutput step = decode_step(live[h].state, live[h].prev, enc, ctx);
      const auto p = step.p_final.values();
      for (std::size_t w : top_k(p, beam_width)) {
        const double lp = safe_log(p[w]);
        candidates.push_back({live[h].hyp.log_prob + lp, h, w, lp});
      }
      next_states[h] = std::move(step.state);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Live> next;
    const std::size_t slots = beam_width - finished.size();
    for (std::size_t c = 0; c < candidates.size() && c < slots; ++c) {
      const Candidate& cand = candidates[c];
      Hypothesis hyp = live[cand.parent].hyp;
      hyp.ids.push_back(cand.token);
      hyp.log_prob = cand.score;
      if (cand.token == data::Vocabulary::kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
        continue;
      }
      hyp.tokens.push_back(ctx.ext.token(cand.token));
      next.push_back({std::move(hyp), next_states[cand.parent], cand.token});
    }
    live = std::move(next);
  }

  std::vector<Hypothesis> pool = std::move(finished);
  for (auto& l : live) pool.push_back(std::move(l.hyp));
  if (pool.empty()) return Hypothesis{};
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i)
    if (pool[i].normalized_score() > pool[best].normalized_score()) best = i;
  return pool[best];
}

num::Checkpoint Model::to_checkpoint(std::size_t step, nlohmann::json extra_config) const {
  num::Checkpoint ck;
  ck.step = step;
  ck.config = std::move(extra_config);
  ck.config["model"] = config_.to_json();
  ck.config["vocab"] = vocab_.to_json();
  ck.tensors = params_.named();
  return ck;
}

Model Model::from_checkpoint(const num::Checkpoint& checkpoint) {
  if (!checkpoint.config.contains("model") || !checkpoint.config.contains("vocab"))
    throw CompatibilityError("checkpoint lacks model config or vocabulary");
  const ModelConfig config = ModelConfig::from_json(checkpoint.config["model"]);
  data::Vocabulary vocab = data::Vocabulary::from_json(checkpoint.config["vocab"]);
  std::mt19937_64 rng(0);
  ModelParams params = ModelParams::init(config, vocab.size(), rng);
  for (auto& [name, tensor] : params.named()) {
    const Tensor& stored = checkpoint.find(name);
    if (stored.shape() != tensor.shape())
      throw CompatibilityError("parameter '" + name + "' has shape " + num::shape_string(stored.shape()) +
                               " in the checkpoint but " + num::shape_string(tensor.shape()) + " in the model");
    Tensor target = tensor;
    std::copy(stored.values().begin(), stored.values().end(), target.mutable_values().begin());
  }
  return Model(config, std::move(vocab), std::move(params));
}

}  // namespace confnet2seq::model
