#include "halop/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace halop {

using nlohmann::json;

namespace {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must be in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0, 1]");
  if (entropy_coef < 0.0 || value_coef < 0.0) throw std::invalid_argument("loss coefficients must be >= 0");
  if (epochs < 1 || minibatch < 1) throw std::invalid_argument("epochs and minibatch must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (rounds < 0) throw std::invalid_argument("rounds must be >= 0");
}

json to_json(const PpoConfig& c) {
  return json{{"clip", c.clip},
              {"gamma", c.gamma},
              {"lambda", c.lambda},
              {"entropy_coef", c.entropy_coef},
              {"value_coef", c.value_coef},
              {"epochs", c.epochs},
              {"minibatch", c.minibatch},
              {"learning_rate", c.learning_rate},
              {"max_grad_norm", c.max_grad_norm},
              {"rounds", c.rounds},
              {"optimizer", optimizer_name(c.optimizer)},
              {"normalize_advantages", c.normalize_advantages}};
}

PpoConfig ppo_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("ppo config must be a JSON object");
  static const std::set<std::string> known{"clip",          "gamma",         "lambda",   "entropy_coef",
                                           "value_coef",    "epochs",        "minibatch", "learning_rate",
                                           "max_grad_norm", "rounds",        "optimizer", "normalize_advantages"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown ppo key '" + k + "'");
  }
  PpoConfig c;
  c.clip = j.value("clip", c.clip);
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.epochs = j.value("epochs", c.epochs);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.rounds = j.value("rounds", c.rounds);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  c.validate();
  return c;
}

Advantages compute_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                              double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("rewards and values differ in length");
  const std::size_t n = rewards.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.targets.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    gae = delta + gamma * lambda * gae;
    out.advantages[i] = gae;
    out.targets[i] = gae + values[i];
  }
  return out;
}

Advantages compute_advantages(std::span<const double> values, double terminal_reward, double gamma, double lambda) {
  std::vector<double> rewards(values.size(), 0.0);
  if (!rewards.empty()) rewards.back() = terminal_reward;
  return compute_advantages(rewards, values, gamma, lambda);
}

void normalize_advantages(std::span<double> adv) {
  if (adv.size() < 2) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) {
    for (double& a : adv) a -= mean;
    return;
  }
  for (double& a : adv) a = (a - mean) / sd;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

void Optimizer::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("parameter and gradient sizes differ");
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
    return;
  }
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

PpoDiagnostics ppo_update(PpoModel& model, std::span<const PpoSample> batch, const PpoConfig& cfg,
                          Optimizer& optimizer, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("ppo_update needs a non-empty batch");
  for (const auto& s : batch) {
    if (!std::isfinite(s.old_log_prob)) throw std::invalid_argument("old log-probabilities must be finite");
  }
  ParameterStore& store = model.parameters();
  const std::vector<double> saved_params = store.data();
  const Optimizer saved_opt = optimizer;

  std::vector<double> adv(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = batch[i].advantage;
  if (cfg.normalize_advantages) normalize_advantages(adv);

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatch);

  PpoDiagnostics diag;
  double sum_policy = 0.0, sum_value = 0.0, sum_entropy = 0.0, sum_kl = 0.0, sum_norm = 0.0;
  std::size_t n_clipped = 0, n_seen = 0;
  bool first = true;

  auto abort = [&](const std::string& why) {
    store.data() = saved_params;
    store.zero_grad();
    optimizer = saved_opt;
    PpoDiagnostics d;
    d.aborted = true;
    d.message = why;
    return d;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += mb) {
      const std::size_t end = std::min(order.size(), begin + mb);
      const double inv_b = 1.0 / static_cast<double>(end - begin);
      store.zero_grad();
      double loss = 0.0;
      for (std::size_t q = begin; q < end; ++q) {
        const std::size_t i = order[q];
        const PpoSample& s = batch[i];
        auto ev = model.evaluate(i);
        const double ratio = std::exp(ev->log_prob - s.old_log_prob);
        const double a = adv[i];
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        const double surrogate = std::min(ratio * a, clipped * a);
        const bool saturated = (a >= 0.0 && ratio > 1.0 + cfg.clip) || (a < 0.0 && ratio < 1.0 - cfg.clip);
        const double d_logp = saturated ? 0.0 : -ratio * a * inv_b;
        const double verr = ev->value - s.value_target;
        loss += (-surrogate + cfg.value_coef * verr * verr - cfg.entropy_coef * ev->entropy) * inv_b;
        ev->backward(d_logp, -cfg.entropy_coef * inv_b, 2.0 * cfg.value_coef * verr * inv_b);

        sum_policy += -surrogate;
        sum_value += verr * verr;
        sum_entropy += ev->entropy;
        sum_kl += (ratio - 1.0) - (ev->log_prob - s.old_log_prob);
        if (std::abs(ratio - 1.0) > cfg.clip) ++n_clipped;
        ++n_seen;
        if (first) diag.initial_ratio_error = std::max(diag.initial_ratio_error, std::abs(ratio - 1.0));
      }
      first = false;
      auto& g = store.grad();
      if (!std::isfinite(loss) || !all_finite(g)) return abort("non-finite loss or gradient; update discarded");
      double norm = 0.0;
      for (double x : g) norm += x * x;
      norm = std::sqrt(norm);
      sum_norm += norm;
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        const double k = cfg.max_grad_norm / norm;
        for (double& x : g) x *= k;
      }
      optimizer.step(store.data(), g);
      if (!all_finite(store.data())) return abort("non-finite parameters after step; update discarded");
      ++diag.updates;
    }
  }
  store.zero_grad();
  const double n = static_cast<double>(n_seen);
  diag.policy_loss = sum_policy / n;
  diag.value_loss = sum_value / n;
  diag.entropy = sum_entropy / n;
  diag.approx_kl = sum_kl / n;
  diag.clip_fraction = static_cast<double>(n_clipped) / n;
  diag.grad_norm = sum_norm / diag.updates;
  return diag;
}

}  // namespace halop
