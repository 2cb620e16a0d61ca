#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "halop/episode_io.hpp"
#include "halop/eval_metrics.hpp"
#include "halop/halop_agent.hpp"
#include "halop/market_sim.hpp"
#include "halop/ppo.hpp"

namespace halop {

struct StepRecord {
  StepInput input;
  HalopDecision decision;
  double old_log_prob = 0.0;
  double value_bps = 0.0;
};

struct Trajectory {
  std::string stock_id;
  std::string day;
  std::vector<StepRecord> steps;
  ExecutionTrace trace;
  SettlementReport settlement;
  double reward_bps = 0.0;
};

Trajectory rollout_episode(Agent& agent, const EpisodeData& episode, const VolumeSchedule& schedule, ActMode mode,
                           std::uint64_t seed);

// One trajectory per episode of the day, in input order. Episode i draws from
// the stream mix_seed(seed, i), so results do not depend on `threads`.
// Episodes that fail are skipped and described in `warnings`.
std::vector<Trajectory> rollout_day(Agent& agent, const std::vector<const EpisodeData*>& episodes,
                                    const ScheduleFn& schedule, ActMode mode, std::uint64_t seed, int threads = 1,
                                    std::vector<std::string>* warnings = nullptr);

// Flattened PPO samples with GAE advantages (bps) and critic-unit targets.
struct RolloutBatch {
  std::vector<const StepRecord*> steps;
  std::vector<PpoSample> samples;
};

RolloutBatch make_batch(const std::vector<Trajectory>& trajectories, const PpoConfig& cfg, double value_scale);

// Adapts an agent and a rollout batch to the PPO update.
class AgentPpoModel final : public PpoModel {
public:
  AgentPpoModel(Agent& agent, const RolloutBatch& batch) : agent_(agent), batch_(batch) {}
  ParameterStore& parameters() override { return agent_.network().params(); }
  std::unique_ptr<PolicyEvaluation> evaluate(std::size_t i) override {
    const StepRecord& s = *batch_.steps.at(i);
    return agent_.evaluate(s.input, s.decision);
  }

private:
  Agent& agent_;
  const RolloutBatch& batch_;
};

// Round r trains on days[r].
struct EpochPlan {
  std::vector<std::string> days;

  // Uniform draws with replacement from `train_days`.
  static EpochPlan random(const std::vector<std::string>& train_days, int rounds, std::uint64_t seed);
};

struct TrainConfig {
  AgentConfig agent;
  PpoConfig ppo;
  std::uint64_t seed = 0;
  int eval_every = 10;          // rounds; <= 0 evaluates only at the start and end
  int eval_days = 10;           // most recent days held out when splitting a dataset
  int test_days = 0;            // most recent days excluded from both training and evaluation
  int threads = 1;
  bool eval_greedy = true;
  bool log_trajectories = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LearningCurveRow {
  int round = 0;
  std::string day;
  double mean_reward_bps = 0.0;
  PpoDiagnostics diag;
};

struct EvalRow {
  int round = 0;
  MetricsReport metrics;
};

struct TrainResult {
  std::vector<LearningCurveRow> curve;
  std::vector<EvalRow> evals;
  int best_round = -1;
  double best_pnl = 0.0;
  std::vector<std::string> warnings;
};

// Oldest days for training, the last `eval_days` for evaluation.
std::pair<std::vector<std::string>, std::vector<std::string>> split_days(const std::vector<std::string>& days,
                                                                         int eval_days);

// Writes into `out_dir`: checkpoint_initial.json, and when rounds > 0 also
// checkpoint_best.json (highest eval PnL, ties to the earlier round) and
// checkpoint_final.json; learning_curve.csv; eval.csv; config.json. Throws
// std::invalid_argument when the day sets overlap or a day is missing.
TrainResult train(const Dataset& data, const std::vector<std::string>& train_days,
                  const std::vector<std::string>& eval_days, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, std::unique_ptr<Agent>* final_agent = nullptr);

std::vector<const EpisodeData*> episodes_of(const Dataset& data, const std::vector<std::string>& days);

}  // namespace halop
