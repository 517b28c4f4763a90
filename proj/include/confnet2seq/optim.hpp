#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "confnet2seq/tensor.hpp"

namespace confnet2seq::num {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1.0;
  // lr is multiplied by decay_factor once every decay_steps updates.
  double decay_factor = 0.5;
  std::size_t decay_steps = 10000;
  std::optional<double> grad_clip_norm = 5.0;
  double dropout_rate = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

// learning_rate * decay_factor^floor(step / decay_steps), step counted from 0.
double learning_rate_at(const OptimizerConfig& config, std::size_t step);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }

  // Applies one update from the gradients currently stored on `params`.
  // Returns the global gradient norm before clipping. Throws DivergenceError
  // (leaving every parameter untouched) if any gradient is non-finite.
  double step(std::vector<NamedTensor>& params, std::size_t step);

  // Adam moment buffers, named "adam.m.<param>" / "adam.v.<param>", for
  // checkpointing. Empty for SGD.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  Moments& moments_for(const NamedTensor& param);

  OptimizerConfig config_;
  std::vector<std::pair<std::string, Moments>> moments_;
};

}  // namespace confnet2seq::num
