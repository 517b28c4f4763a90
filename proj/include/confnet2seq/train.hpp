#pragma once

// Training loop: run configuration, seeded batch schedule, periodic
// checkpoints and a JSON-lines loss log.
//
// Every source of randomness is derived from (seed, step), so a run resumed
// from a checkpoint replays exactly the batches and dropout masks an
// uninterrupted run would have drawn.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "confnet2seq/checkpoint.hpp"
#include "confnet2seq/data.hpp"
#include "confnet2seq/model.hpp"
#include "confnet2seq/optim.hpp"

namespace confnet2seq::train {

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path embeddings;  // empty: random initialization
  bool freeze_embeddings = false;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path log_path;  // empty: <checkpoint_dir>/train_log.jsonl

  model::ModelConfig model;
  num::OptimizerConfig optimizer;
  data::InputMode input_mode = data::InputMode::clean;
  std::size_t vocab_max_size = 0;
  std::size_t vocab_min_freq = 1;
  std::size_t batch_size = 32;
  std::size_t steps = 10000;
  std::size_t checkpoint_every = 1000;  // 0: only at the end
  std::size_t beam_width = 5;
  std::size_t max_decode_length = 50;
  std::uint64_t seed = 1;
  // Added to the default noise lexicon used when cleaning questions.
  std::vector<std::string> noise;

  void validate() const;
  // Corpus loading options implied by the input mode, model limits and noise.
  data::LoadOptions load_options() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; relative paths resolve against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

// CONFNET2SEQ_SEED, when set, replaces config.seed. Throws ContractError on a
// malformed value.
void apply_seed_override(RunConfig& config);

struct StepRecord {
  std::size_t step = 0;  // 1-based index of the completed update
  double loss = 0.0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(RunConfig config, data::Dataset dataset, model::Model model);

  // Loads the corpus, builds the vocabulary and initializes the model.
  static Trainer from_config(const RunConfig& config);
  // Rebuilds a trainer at the state stored under `prefix`.
  static Trainer resume(const RunConfig& config, const std::filesystem::path& prefix);

  const RunConfig& config() const { return config_; }
  const data::Dataset& dataset() const { return dataset_; }
  const model::Model& model() const { return model_; }
  std::size_t step_count() const { return step_; }

  // Loss of the batch scheduled for the next update, without updating.
  double peek_loss() const;
  // One optimizer update. Throws DivergenceError naming the step when the
  // loss or any gradient is non-finite.
  StepRecord train_step();
  // Runs until config().steps updates have been made, logging each one and
  // checkpointing on schedule and at the end.
  std::vector<StepRecord> run(std::ostream* log = nullptr);

  // Teacher-forced loss over the whole corpus, no dropout.
  double corpus_loss() const;

  num::Checkpoint checkpoint() const;
  std::filesystem::path save(const std::string& name) const;

 private:
  const data::Batch& scheduled_batch(std::size_t step) const;
  model::ForwardMode train_mode(std::mt19937_64& rng) const;
  std::vector<num::NamedTensor> trainable() const;

  RunConfig config_;
  data::Dataset dataset_;
  model::Model model_;
  num::Optimizer optimizer_;
  std::vector<data::Batch> batches_;
  std::size_t step_ = 0;
  mutable std::vector<std::size_t> order_;
  mutable std::size_t order_epoch_ = static_cast<std::size_t>(-1);
};

}  // namespace confnet2seq::train
