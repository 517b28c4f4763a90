#include "confnet2seq/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::train {

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kEmbeddingStream = 3;

}  // namespace

void RunConfig::validate() const {
  model.validate();
  optimizer.validate();
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  if (beam_width == 0) throw ContractError("beam_width must be >= 1");
  if (max_decode_length == 0 || max_decode_length > 50)
    throw ContractError("max_decode_length must lie in 1..50");
}

nlohmann::json RunConfig::to_json() const {
  return {{"corpus", corpus.string()},
          {"embeddings", embeddings.string()},
          {"freeze_embeddings", freeze_embeddings},
          {"checkpoint_dir", checkpoint_dir.string()},
          {"log_path", log_path.string()},
          {"model", model.to_json()},
          {"optimizer", optimizer.to_json()},
          {"input_mode", data::to_string(input_mode)},
          {"vocab_max_size", vocab_max_size},
          {"vocab_min_freq", vocab_min_freq},
          {"batch_size", batch_size},
          {"steps", steps},
          {"checkpoint_every", checkpoint_every},
          {"beam_width", beam_width},
          {"max_decode_length", max_decode_length},
          {"seed", seed},
          {"noise", noise}};
}

data::LoadOptions RunConfig::load_options() const {
  data::LoadOptions opts;
  opts.mode = input_mode;
  opts.max_length = model.max_length;
  opts.parse.max_bins = model.max_bins;
  opts.parse.max_arcs = model.max_arcs;
  for (const auto& t : noise) opts.noise.add(t);
  return opts;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw DataError("run config must be a JSON object");
  RunConfig c;
  try {
    c.corpus = resolve(j.value("corpus", std::string()), base_dir);
    c.embeddings = resolve(j.value("embeddings", std::string()), base_dir);
    c.freeze_embeddings = j.value("freeze_embeddings", c.freeze_embeddings);
    c.checkpoint_dir = resolve(j.value("checkpoint_dir", std::string()), base_dir);
    c.log_path = resolve(j.value("log_path", std::string()), base_dir);
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j["model"]);
    if (j.contains("optimizer")) c.optimizer = num::OptimizerConfig::from_json(j["optimizer"]);
    if (j.contains("input_mode")) c.input_mode = data::parse_input_mode(j["input_mode"].get<std::string>());
    c.vocab_max_size = j.value("vocab_max_size", c.vocab_max_size);
    c.vocab_min_freq = j.value("vocab_min_freq", c.vocab_min_freq);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.beam_width = j.value("beam_width", c.beam_width);
    c.max_decode_length = j.value("max_decode_length", c.max_decode_length);
    c.seed = j.value("seed", c.seed);
    c.noise = j.value("noise", c.noise);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

void apply_seed_override(RunConfig& config) {
  const char* env = std::getenv("CONFNET2SEQ_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || env[0] == '-') throw ContractError(std::string("CONFNET2SEQ_SEED is not a seed: ") + env);
  config.seed = v;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step}, {"loss", loss}, {"lr", learning_rate}, {"grad_norm", grad_norm}};
}

Trainer::Trainer(RunConfig config, data::Dataset dataset, model::Model model)
    : config_(std::move(config)),
      dataset_(std::move(dataset)),
      model_(std::move(model)),
      optimizer_(config_.optimizer) {
  config_.validate();
  if (dataset_.empty()) throw DataError("training corpus holds no usable samples");
  batches_ = data::batchify(dataset_, config_.batch_size);
}

Trainer Trainer::from_config(const RunConfig& config) {
  config.validate();
  const data::LoadOptions opts = config.load_options();
  data::Dataset ds = data::load_corpus(config.corpus, opts);
  data::Vocabulary vocab = data::build_vocab(ds, config.vocab_max_size, config.vocab_min_freq);
  model::Model m = model::Model::create(config.model, std::move(vocab), config.seed);
  if (!config.embeddings.empty()) {
    auto rng = derived_rng(config.seed, kEmbeddingStream, 0);
    const auto table = data::load_embeddings(config.embeddings, m.vocab(), rng, config.model.init_range,
                                             !config.freeze_embeddings);
    if (table.table.shape() != m.params().embeddings().shape())
      throw CompatibilityError("embedding file dimension " + std::to_string(table.table.dim(1)) +
                               " differs from embedding_dim " + std::to_string(config.model.embedding_dim));
    num::Tensor target = m.params().embeddings();
    std::copy(table.table.values().begin(), table.table.values().end(), target.mutable_values().begin());
  }
  return Trainer(config, std::move(ds), std::move(m));
}

Trainer Trainer::resume(const RunConfig& config, const std::filesystem::path& prefix) {
  const num::Checkpoint ck = num::load_checkpoint(prefix);
  model::Model m = model::Model::from_checkpoint(ck);
  if (!(m.config() == config.model))
    throw CompatibilityError("checkpoint model config differs from the run config");
  const data::LoadOptions opts = config.load_options();
  Trainer t(config, data::load_corpus(config.corpus, opts), std::move(m));
  std::vector<num::NamedTensor> state;
  for (const auto& nt : ck.tensors)
    if (nt.name.rfind("adam.", 0) == 0) state.push_back(nt);
  t.optimizer_.load_state(state);
  t.step_ = ck.step;
  return t;
}

const data::Batch& Trainer::scheduled_batch(std::size_t step) const {
  const std::size_t epoch = step / batches_.size();
  if (epoch != order_epoch_) {
    order_.resize(batches_.size());
    std::iota(order_.begin(), order_.end(), 0);
    auto rng = derived_rng(config_.seed, kShuffleStream, epoch);
    std::shuffle(order_.begin(), order_.end(), rng);
    order_epoch_ = epoch;
  }
  return batches_[order_[step % batches_.size()]];
}

model::ForwardMode Trainer::train_mode(std::mt19937_64& rng) const {
  return {config_.optimizer.dropout_rate, &rng};
}

std::vector<num::NamedTensor> Trainer::trainable() const {
  std::vector<num::NamedTensor> params = model_.parameters();
  if (config_.freeze_embeddings)
    params.erase(std::remove_if(params.begin(), params.end(), [](const auto& p) { return p.name == "embedding"; }),
                 params.end());
  return params;
}

double Trainer::peek_loss() const {
  num::NoGradGuard no_grad;
  auto rng = derived_rng(config_.seed, kDropoutStream, step_);
  return model_.batch_loss(dataset_, scheduled_batch(step_), train_mode(rng)).item();
}

StepRecord Trainer::train_step() {
  std::vector<num::NamedTensor> params = trainable();
  for (auto& p : model_.parameters()) p.tensor.zero_grad();
  auto rng = derived_rng(config_.seed, kDropoutStream, step_);
  const num::Tensor loss = model_.batch_loss(dataset_, scheduled_batch(step_), train_mode(rng));
  StepRecord rec;
  rec.step = step_ + 1;
  rec.loss = loss.item();
  if (!std::isfinite(rec.loss))
    throw DivergenceError("training diverged at step " + std::to_string(rec.step) + ": loss is " +
                          std::to_string(rec.loss));
  num::backward(loss);
  rec.learning_rate = num::learning_rate_at(config_.optimizer, step_);
  try {
    rec.grad_norm = optimizer_.step(params, step_);
  } catch (const DivergenceError& e) {
    throw DivergenceError("training diverged at step " + std::to_string(rec.step) + ": " + e.what());
  }
  ++step_;
  return rec;
}

std::vector<StepRecord> Trainer::run(std::ostream* log) {
  std::vector<StepRecord> records;
  while (step_ < config_.steps) {
    records.push_back(train_step());
    if (log) *log << records.back().to_json().dump() << '\n' << std::flush;
    if (!config_.checkpoint_dir.empty() && config_.checkpoint_every != 0 && step_ % config_.checkpoint_every == 0)
      save("step-" + std::to_string(step_));
  }
  if (!config_.checkpoint_dir.empty()) save("latest");
  return records;
}

double Trainer::corpus_loss() const {
  num::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& s : dataset_.samples) total += model_.sample_loss(s).item();
  return total / static_cast<double>(dataset_.size());
}

num::Checkpoint Trainer::checkpoint() const {
  nlohmann::json extra = {{"run", config_.to_json()}};
  num::Checkpoint ck = model_.to_checkpoint(step_, std::move(extra));
  for (auto& s : optimizer_.state()) ck.tensors.push_back(std::move(s));
  return ck;
}

std::filesystem::path Trainer::save(const std::string& name) const {
  if (config_.checkpoint_dir.empty()) throw ContractError("no checkpoint_dir configured");
  std::filesystem::create_directories(config_.checkpoint_dir);
  const auto prefix = config_.checkpoint_dir / name;
  num::save_checkpoint(prefix, checkpoint());
  return prefix;
}

}  // namespace confnet2seq::train
