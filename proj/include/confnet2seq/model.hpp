#pragma once

// Pointer-generator over a spoken question and a factoid answer.
//
// The question (confusion-network bin encodings) and the factoid answer
// (word embeddings) run through one shared stacked bi-LSTM. Their hidden
// states are stacked into a single source memory h_S = [h_Q; h_A] that the
// decoder attends over. Each output step mixes generation from the base
// vocabulary with two copy distributions:
//
//   P(w) = p_gen P_vocab(w) + (1 - p_gen) (P̃_copy(w) + P_copy(w))
//   P̃_copy(w) = Σ_{i,j : w_i^j = w} attn_i π_i^j   (question bins)
//   P_copy(w) = Σ_{k : a_k = w} attn_{n+k}          (answer tokens)
//
// Because attention sums to one over all n+m positions and every bin's
// posteriors sum to one, the two copy terms together carry unit mass and
// P is a proper distribution over the extended vocabulary.

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "confnet2seq/checkpoint.hpp"
#include "confnet2seq/confnet.hpp"
#include "confnet2seq/data.hpp"
#include "confnet2seq/encoder.hpp"
#include "confnet2seq/lstm.hpp"
#include "confnet2seq/ops.hpp"
#include "confnet2seq/optim.hpp"
#include "confnet2seq/tensor.hpp"

namespace confnet2seq::model {

using num::Tensor;

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::size_t hidden_size = 512;
  std::size_t layers = 3;
  // 0 means hidden_size.
  std::size_t attention_dim = 0;
  double init_range = 0.1;
  std::size_t max_bins = 50;
  std::size_t max_arcs = 20;
  std::size_t max_length = 50;

  std::size_t attention_size() const { return attention_dim ? attention_dim : hidden_size; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct BiLstmParams {
  std::vector<num::LstmCellParams> forward;
  std::vector<num::LstmCellParams> backward;
};

struct AttentionParams {
  Tensor W_h;  // [A, 2H]
  Tensor W_s;  // [A, H]
  Tensor v;    // [A]
  Tensor b;    // [A]
};

// P_vocab = softmax(W [s_t; c_t] + b)
struct GeneratorParams {
  Tensor W;  // [V, 3H]
  Tensor b;  // [V]
};

// p_gen = σ(w_c·c_t + w_s·s_t + w_x·x_t + b)
struct SwitchParams {
  Tensor w_c;  // [2H]
  Tensor w_s;  // [H]
  Tensor w_x;  // [E]
  Tensor b;    // [1]
};

struct ModelParams {
  // Its embedding table is also the answer-side and decoder-input embedding.
  encoder::ConfNetEncoderParams confnet;
  // One stack serves both the question and the answer stream.
  BiLstmParams encoder;
  std::vector<num::LstmCellParams> decoder;
  AttentionParams attention;
  GeneratorParams generator;
  SwitchParams pgen;

  const Tensor& embeddings() const { return confnet.embedding_table; }

  static ModelParams init(const ModelConfig& config, std::size_t vocab_size, std::mt19937_64& rng);
  // Stable names, in initialization order.
  std::vector<num::NamedTensor> named() const;
};

// Base vocabulary plus this sample's source tokens that the base lacks.
class ExtendedVocabulary {
 public:
  ExtendedVocabulary(const data::Vocabulary& base, const confnet::ConfusionNetwork& net,
                     const std::vector<std::string>& answer);

  std::size_t size() const { return base_->size() + extra_.size(); }
  std::size_t base_size() const { return base_->size(); }
  const std::vector<std::string>& extra() const { return extra_; }
  bool is_extra(std::size_t index) const { return index >= base_->size(); }

  std::optional<std::size_t> find(const std::string& token) const;
  // Throws DataError naming the token when it is neither in the base
  // vocabulary nor copyable from this sample.
  std::size_t require(const std::string& token) const;
  const std::string& token(std::size_t index) const;
  // Embedding row for a token fed back into the decoder (extras map to UNK).
  std::size_t input_index(std::size_t index) const;
  // Reference tokens that are neither in the base vocabulary nor copyable
  // map to UNK.
  std::vector<std::size_t> target_ids(const std::vector<std::string>& tokens) const;

 private:
  const data::Vocabulary* base_;
  std::vector<std::string> extra_;
  std::map<std::string, std::size_t> extra_index_;
};

// Per-sample inputs resolved against the vocabulary.
struct SourceContext {
  confnet::ConfusionNetwork net;
  std::vector<std::string> answer;
  ExtendedVocabulary ext;
  // attention position -> extended-vocabulary index, weighted by π for
  // question arcs and by 1 for answer tokens.
  std::vector<num::ScatterEntry> copy_entries;

  std::size_t question_length() const { return net.size(); }
  std::size_t answer_length() const { return answer.size(); }
};

using DecoderState = std::vector<num::LstmState>;

struct EncoderOutputs {
  std::vector<Tensor> h_Q;  // n states, each [2H]
  std::vector<Tensor> h_A;  // m states, each [2H]
  Tensor h_S;               // [n+m, 2H]
  Tensor keys;              // [n+m, A] = h_S W_hᵀ, cached across steps
  DecoderState init_state;  // per layer: question final + answer final
};

struct StepOutput {
  Tensor attn;     // [n+m]
  Tensor p_gen;    // [1]
  Tensor p_vocab;  // [V]
  Tensor p_final;  // [|extended|]
  Tensor context;  // [2H]
  DecoderState state;
};

struct StepDistribution {
  std::vector<double> attn;
  double p_gen = 0.0;
  std::vector<double> p_vocab;
  std::vector<double> p_final;

  static StepDistribution from(const StepOutput& step);
};

// Dropout is active only when rate > 0 and an rng is supplied.
struct ForwardMode {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return dropout > 0.0 && rng != nullptr; }
};

using TokenDistribution = std::map<std::string, double>;

// P̃_copy(w) = Σ_{i,j: w_i^j = w} attn_i π_i^j over a normalized network.
TokenDistribution copy_confnet(std::span<const double> attn_question, const confnet::ConfusionNetwork& net);
// P_copy(w) = Σ_{k: a_k = w} attn_k.
TokenDistribution copy_answer(std::span<const double> attn_answer, const std::vector<std::string>& answer);
// Mixture over the extended vocabulary; source words outside the base
// vocabulary receive only copy mass.
std::vector<double> final_distribution(double p_gen, std::span<const double> p_vocab, const TokenDistribution& copy_cn,
                                       const TokenDistribution& copy_ans, const ExtendedVocabulary& ext);

// softmax_i(vᵀ tanh(W_h h_i + W_s s_t + b_attn)) over the rows of h_S.
Tensor global_attention(const Tensor& h_S, const Tensor& s_t, const AttentionParams& params);

// Mean over steps of -log max(P_t(target_t), 1e-12).
Tensor nll_loss(std::span<const Tensor> step_distributions, std::span<const std::size_t> targets);

struct Hypothesis {
  std::vector<std::size_t> ids;  // extended-vocabulary indices, EOS included when emitted
  std::vector<std::string> tokens;  // rendered output, EOS excluded
  double log_prob = 0.0;
  bool finished = false;

  // log_prob divided by the number of generated steps.
  double normalized_score() const;
};

class Model {
 public:
  Model(ModelConfig config, data::Vocabulary vocab, ModelParams params);
  static Model create(const ModelConfig& config, data::Vocabulary vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  std::vector<num::NamedTensor> parameters() const { return params_.named(); }

  SourceContext prepare(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer) const;
  EncoderOutputs encode(const SourceContext& ctx, const ForwardMode& mode = {}) const;
  EncoderOutputs encode_sample(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer) const;

  // Runs the encoder stack over one input stream. Returns per-position
  // outputs [2H] and the per-layer combined final state.
  std::pair<std::vector<Tensor>, DecoderState> run_encoder(const std::vector<Tensor>& inputs,
                                                           const ForwardMode& mode = {}) const;

  StepOutput decode_step(const DecoderState& state, std::size_t prev_token, const EncoderOutputs& enc,
                         const SourceContext& ctx, const ForwardMode& mode = {}) const;

  // Teacher-forced per-step distributions for `targets` (EOS included).
  std::vector<Tensor> teacher_forced(const SourceContext& ctx, const EncoderOutputs& enc,
                                     std::span<const std::size_t> targets, const ForwardMode& mode = {}) const;

  Tensor sample_loss(const data::Sample& sample, const ForwardMode& mode = {}) const;
  // Mean of per-sample losses; each row is cut to the real extent its
  // masks mark, so padding never reaches attention or the loss.
  Tensor batch_loss(const data::Dataset& dataset, const data::Batch& batch, const ForwardMode& mode = {}) const;

  // Summed log-probability of `tokens` followed by EOS.
  double sequence_log_prob(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                           const std::vector<std::string>& tokens) const;

  Hypothesis greedy_decode(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                           std::size_t max_length = 50) const;
  Hypothesis beam_decode(const confnet::ConfusionNetwork& net, const std::vector<std::string>& answer,
                         std::size_t beam_width = 5, std::size_t max_length = 50) const;

  num::Checkpoint to_checkpoint(std::size_t step, nlohmann::json extra_config = nlohmann::json::object()) const;
  // Throws CompatibilityError when shapes or vocabulary disagree with the
  // checkpoint's own config.
  static Model from_checkpoint(const num::Checkpoint& checkpoint);

 private:
  ModelConfig config_;
  data::Vocabulary vocab_;
  ModelParams params_;
};

}  // namespace confnet2seq::model
