#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "halop/autodiff.hpp"
#include "halop/rng.hpp"
#include "json.hpp"

namespace halop {

// A policy's log-probability, entropy and value for one stored decision,
// with a handle to push loss gradients back into the parameters.
class PolicyEvaluation {
public:
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;  // critic units

  virtual ~PolicyEvaluation() = default;
  // Accumulates parameter gradients given d(loss)/d(log_prob),
  // d(loss)/d(entropy) and d(loss)/d(value).
  virtual void backward(double d_log_prob, double d_entropy, double d_value) = 0;
};

// What ppo_update needs from a policy: its parameters and a way to
// re-evaluate sample i under the current parameters.
class PpoModel {
public:
  virtual ~PpoModel() = default;
  virtual ParameterStore& parameters() = 0;
  virtual std::unique_ptr<PolicyEvaluation> evaluate(std::size_t sample) = 0;
};

enum class OptimizerKind { Adam, Sgd };

struct PpoConfig {
  double clip = 0.2;
  double gamma = 1.0;
  double lambda = 0.95;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int epochs = 4;
  int minibatch = 256;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  int rounds = 100;
  OptimizerKind optimizer = OptimizerKind::Adam;
  bool normalize_advantages = true;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const nlohmann::json& j);

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> targets;  // advantage + value
};

// Generalized advantage estimation; values[t] is V(s_t), the state after the
// last step is terminal.
Advantages compute_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                              double lambda);
// Terminal-only reward R at the last step.
Advantages compute_advantages(std::span<const double> values, double terminal_reward, double gamma, double lambda);

// In place to zero mean and unit population std; no-op for fewer than two
// entries or zero spread.
void normalize_advantages(std::span<double> adv);

class Optimizer {
public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(std::vector<double>& params, const std::vector<double>& grad);
  OptimizerKind kind() const noexcept { return kind_; }

private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct PpoSample {
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;  // critic units
};

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;           // mean pre-clip norm
  double initial_ratio_error = 0.0; // max |ratio - 1| on the first minibatch
  int updates = 0;
  bool aborted = false;
  std::string message;
};

// Clipped-surrogate update over `epochs` shuffled passes. Advantages are
// normalized over the whole batch first when configured. On a non-finite loss
// or gradient, parameters and optimizer state are restored and the update is
// reported as aborted.
PpoDiagnostics ppo_update(PpoModel& model, std::span<const PpoSample> batch, const PpoConfig& cfg,
                          Optimizer& optimizer, Rng& rng);

}  // namespace halop
