#include "confnet2seq/optim.hpp"

#include <algorithm>
#include <cmath>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::num {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ContractError("decay_factor must lie in (0, 1]");
  if (decay_steps == 0) throw ContractError("decay_steps must be positive");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ContractError("grad_clip_norm must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ContractError("dropout_rate must lie in [0, 1)");
}

nlohmann::json OptimizerConfig::to_json() const {
  nlohmann::json j = {{"kind", kind == OptimizerKind::sgd ? "sgd" : "adam"},
                      {"learning_rate", learning_rate},
                      {"decay_factor", decay_factor},
                      {"decay_steps", decay_steps},
                      {"dropout_rate", dropout_rate},
                      {"adam_beta1", adam_beta1},
                      {"adam_beta2", adam_beta2},
                      {"adam_epsilon", adam_epsilon}};
  j["grad_clip_norm"] = grad_clip_norm ? nlohmann::json(*grad_clip_norm) : nlohmann::json(nullptr);
  return j;
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  if (j.contains("kind")) {
    const auto kind = j["kind"].get<std::string>();
    if (kind == "sgd") c.kind = OptimizerKind::sgd;
    else if (kind == "adam") c.kind = OptimizerKind::adam;
    else throw ContractError("unknown optimizer kind '" + kind + "'");
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.decay_steps = j.value("decay_steps", c.decay_steps);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  if (j.contains("grad_clip_norm")) {
    if (j["grad_clip_norm"].is_null()) c.grad_clip_norm.reset();
    else c.grad_clip_norm = j["grad_clip_norm"].get<double>();
  }
  c.validate();
  return c;
}

double learning_rate_at(const OptimizerConfig& config, std::size_t step) {
  const auto decays = static_cast<double>(step / config.decay_steps);
  return config.learning_rate * std::pow(config.decay_factor, decays);
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

Optimizer::Moments& Optimizer::moments_for(const NamedTensor& param) {
  for (auto& [name, m] : moments_)
    if (name == param.name) return m;
  moments_.emplace_back(param.name, Moments{std::vector<double>(param.tensor.size(), 0.0),
                                           std::vector<double>(param.tensor.size(), 0.0)});
  return moments_.back().second;
}

double Optimizer::step(std::vector<NamedTensor>& params, std::size_t step) {
  double sq = 0.0;
  for (auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g))
        throw DivergenceError("non-finite gradient for '" + p.name + "' at step " + std::to_string(step));
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  double clip = 1.0;
  if (config_.grad_clip_norm && norm > *config_.grad_clip_norm) clip = *config_.grad_clip_norm / norm;
  const double lr = learning_rate_at(config_, step);

  for (auto& p : params) {
    auto value = p.tensor.mutable_values();
    const auto grad = p.tensor.grad();
    if (config_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * clip * grad[i];
      continue;
    }
    Moments& mom = moments_for(p);
    const double t = static_cast<double>(step + 1);
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = clip * grad[i];
      mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
      value[i] -= lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + config_.adam_epsilon);
    }
  }
  return norm;
}

std::vector<NamedTensor> Optimizer::state() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, m] : moments_) {
    out.push_back({"adam.m." + name, Tensor::constant({m.m.size()}, m.m)});
    out.push_back({"adam.v." + name, Tensor::constant({m.v.size()}, m.v)});
  }
  return out;
}

void Optimizer::load_state(const std::vector<NamedTensor>& state) {
  moments_.clear();
  for (const auto& s : state) {
    const bool is_m = s.name.rfind("adam.m.", 0) == 0;
    const bool is_v = s.name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) continue;
    const std::string param = s.name.substr(7);
    auto it = std::find_if(moments_.begin(), moments_.end(), [&](const auto& e) { return e.first == param; });
    if (it == moments_.end()) {
      moments_.emplace_back(param, Moments{});
      it = std::prev(moments_.end());
    }
    std::vector<double> values(s.tensor.values().begin(), s.tensor.values().end());
    (is_m ? it->second.m : it->second.v) = std::move(values);
  }
  for (const auto& [name, m] : moments_)
    if (m.m.size() != m.v.size()) throw FormatError("optimizer state for '" + name + "' is incomplete");
}

}  // namespace confnet2seq::num
