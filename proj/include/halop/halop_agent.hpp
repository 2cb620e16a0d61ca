#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "halop/market_sim.hpp"
#include "halop/nets.hpp"
#include "halop/policy_dist.hpp"
#include "halop/ppo.hpp"
#include "halop/rng.hpp"
#include "json.hpp"

namespace halop {

// Realizable stage-1 actions: the contiguous tick offsets [lo, hi] around the
// current price and their percentage images.
struct Stage1ActionSpace {
  double current_price = 0.0;
  double tick_size = 0.0;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::vector<std::int64_t> ticks;
  std::vector<double> pct;  // ticks * tick_size / current_price
  bool truncated = false;   // low end clipped so every limit price stays >= 1 tick

  std::size_t size() const noexcept { return ticks.size(); }
  // Percentage grid divided by `unit`, the scale the policy head works in.
  LocationGrid grid(double unit) const;
};

// Throws std::invalid_argument when the price is off the grid or non-positive,
// or when half_width < 1.
Stage1ActionSpace build_stage1_grid(double current_price, double tick_size, int half_width);

// Ticks within +-`pct_band` of the price, clamped to [floor, cap].
int default_half_width(double current_price, double tick_size, double pct_band = 0.01, int floor = 10, int cap = 200);

struct Stage2ActionSpace {
  int half_width = 3;  // K
  std::size_t size() const { return static_cast<std::size_t>(2 * half_width + 1); }
  std::int64_t offset(std::size_t index) const { return static_cast<std::int64_t>(index) - half_width; }
  LocationGrid grid() const;  // {-K, ..., K}; needs K >= 1
};

enum class ActMode {
  Train,   // stochastic, sampled discretization for stage 1
  Sample,  // stochastic, exact discretization
  Greedy,  // most likely action under the exact discretization
};

struct Stage1Options {
  double unit = 1e-3;  // one policy unit in price fraction (10 bps)
  std::size_t n_samples = 16;
};

struct Stage1Result {
  std::size_t index = 0;
  double pct = 0.0;
  std::int64_t ticks = 0;
  double log_prob = 0.0;
  DiscreteFamily family = DiscreteFamily::Exact;
  std::uint64_t sample_seed = 0;  // seed of the frozen cell samples (sampled family)
};

DiscreteFamily stage1_family(ActMode mode);

Stage1Result stage1_act(const Stage1ActionSpace& space, GaussianParams p, const Stage1Options& opts, ActMode mode,
                        Rng& rng);

struct Stage2Result {
  std::size_t index = 0;
  std::int64_t offset = 0;
  double log_prob = 0.0;
};

// GSoftmax over {-K..K}; K = 0 always yields offset 0 with log-prob 0.
Stage2Result stage2_act(const Stage2ActionSpace& space, GaussianParams p, ActMode mode, Rng& rng);

enum class AgentKind {
  Halop,        // discretized Gaussian scoping + GSoftmax refinement
  Stage1Only,   // discretized Gaussian over the tick grid, public + private inputs
  PpoGaussian,  // continuous Gaussian over percentages, rounded to ticks
};

std::string to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& s);

struct HalopDecision {
  AgentKind kind = AgentKind::Halop;
  GaussianParams stage1;
  GaussianParams stage2;
  Stage1Result s1;
  Stage2Result s2;
  double continuous_action = 0.0;  // PpoGaussian draw, in policy units
  std::int64_t final_ticks = 0;    // s1.ticks + s2.offset
  Ticks limit_price = 0;
  bool clamped = false;            // limit price lifted to one tick
  std::int64_t grid_lo = 0;
  std::int64_t grid_hi = 0;
  double value = 0.0;
};

double joint_log_prob(const HalopDecision& d);

struct AgentConfig {
  AgentKind kind = AgentKind::Halop;
  PublicStateConfig state;
  EncoderConfig encoder;  // features and window are taken from `state`
  HeadConfig head;
  int stage2_half_width = 3;
  Stage1Options stage1;
  double half_width_pct = 0.01;
  int half_width_floor = 10;
  int half_width_cap = 200;
  double value_scale = 10.0;  // critic output units, in bps

  NetworkConfig network() const;
  void validate() const;
};

nlohmann::json to_json(const AgentConfig& cfg);
AgentConfig agent_config_from_json(const nlohmann::json& j);

// Everything a step needs to be re-evaluated during the update phase.
struct StepInput {
  std::vector<double> pub_standardized;
  std::vector<double> pub_raw_log;
  std::array<double, 3> priv{};
  double current_price = 0.0;  // currency
  Ticks current_ticks = 0;
  double tick_size = 0.0;
};

StepInput make_step_input(const Observation& obs, const EpisodeSpec& spec);

class Agent {
public:
  Agent(AgentConfig cfg, std::uint64_t seed);
  Agent(AgentConfig cfg, PolicyNetwork net);

  const AgentConfig& config() const noexcept { return cfg_; }
  PolicyNetwork& network() noexcept { return net_; }
  const PolicyNetwork& network() const noexcept { return net_; }

  Stage1ActionSpace action_space(const StepInput& in) const;

  // Network forward + sampling. Parameters are read only.
  HalopDecision act(const StepInput& in, ActMode mode, Rng& rng);
  HalopDecision act(const Observation& obs, const EpisodeSpec& spec, ActMode mode, Rng& rng) {
    return act(make_step_input(obs, spec), mode, rng);
  }

  // Re-evaluates a stored decision under the current parameters. The value
  // is in critic units; multiply by value_scale for bps.
  std::unique_ptr<PolicyEvaluation> evaluate(const StepInput& in, const HalopDecision& d);

  nlohmann::json checkpoint_extra() const;

private:
  AgentConfig cfg_;
  PolicyNetwork net_;
};

void save_agent(const std::filesystem::path& path, const Agent& agent);
std::string agent_checkpoint_text(const Agent& agent);
Agent load_agent(const std::filesystem::path& path);

// One JSON object per decision for the trajectory log.
nlohmann::json decision_to_json(const HalopDecision& d, const StepInput& in);
std::uint64_t state_digest(std::span<const double> values);

}  // namespace halop
