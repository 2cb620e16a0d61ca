#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "halop/episode_io.hpp"
#include "halop/halop_agent.hpp"
#include "halop/market_sim.hpp"
#include "json.hpp"

namespace halop {

// Throws std::invalid_argument for T < 1.
VolumeSchedule twap_schedule(int T);

// Mean per-interval volume share over the most recent `lookback` curves
// (oldest first in `history`), renormalized to one. Days with zero volume are
// ignored; with no usable day the TWAP schedule is returned and `fell_back`
// is set. Throws std::invalid_argument when history is empty or the curves
// differ in length.
VolumeSchedule vwap_schedule(const std::vector<std::vector<double>>& history, int lookback = 21,
                             bool* fell_back = nullptr);

// Per-interval activity of one episode: the summed absolute change of the
// displayed touch volumes between consecutive snapshots.
std::vector<double> interval_volume_curve(const EpisodeData& episode);

enum class StrategyKind { MarketOrder, FixedOffset, Policy };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct Strategy {
  StrategyKind kind = StrategyKind::MarketOrder;
  std::int64_t offset_ticks = 0;  // FixedOffset: limit = current price + offset
  Agent* agent = nullptr;          // Policy
  ActMode mode = ActMode::Greedy;  // Policy
  std::uint64_t seed = 0;          // Policy sampling
};

struct EpisodeResult {
  std::string stock_id;
  std::string day;
  PriceBand band = PriceBand::Medium;
  double close_price = 0.0;
  double excess_return_bps = 0.0;  // cost saved vs TWAP market orders on the same episode
  double reward_bps = 0.0;         // vs the strategy's own schedule benchmark
  double submitted_total = 0.0;
  bool cancellation_violation = false;
  int clamped_prices = 0;
};

using ScheduleFn = std::function<VolumeSchedule(const EpisodeData&)>;

// Optional per-decision sink for the trajectory log.
using DecisionSink = std::function<void(const EpisodeData&, int step, const HalopDecision&, const StepInput&)>;

// Simulates `strategy` once per episode. Episodes whose simulation throws are
// skipped and reported through `errors` when given.
EpisodeResult run_episode(const Strategy& strategy, const EpisodeData& episode, const VolumeSchedule& schedule,
                          const PublicStateConfig& state_cfg, const DecisionSink& sink = {});
std::vector<EpisodeResult> run_strategy(const Strategy& strategy, const std::vector<const EpisodeData*>& episodes,
                                        const ScheduleFn& schedule, const PublicStateConfig& state_cfg,
                                        std::vector<std::string>* errors = nullptr, const DecisionSink& sink = {});

struct MetricsReport {
  std::size_t n = 0;
  double return_bps = 0.0;
  double std_bps = 0.0;  // population
  double t_value = 0.0;  // +inf when Std = 0 and Return != 0
  double pnl_bps = 0.0;
  double violation_rate = 0.0;
  std::vector<std::string> warnings;
};

// Throws std::invalid_argument when n < 2.
MetricsReport compute_metrics(const std::vector<EpisodeResult>& results);

struct BandReport {
  PriceBand band = PriceBand::Medium;
  std::size_t n = 0;
  std::optional<MetricsReport> metrics;  // absent when n < 2
};

struct GroupingReport {
  std::vector<BandReport> bands;  // low, medium, high; empty bands left out
  std::vector<std::string> notes;
};

GroupingReport grouping_report(const std::vector<EpisodeResult>& results);

struct BacktestReport {
  std::string strategy;
  std::string schedule;
  std::vector<EpisodeResult> episodes;
  MetricsReport metrics;
  GroupingReport groups;
  std::vector<std::string> errors;
};

BacktestReport make_report(std::string strategy, std::string schedule, std::vector<EpisodeResult> episodes,
                           std::vector<std::string> errors = {});

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const BacktestReport& r);
BacktestReport backtest_report_from_json(const nlohmann::json& j);

// Renderings for `halop report`.
std::string report_csv(const BacktestReport& r, bool by_band);
std::string report_markdown(const BacktestReport& r, bool by_band);
nlohmann::json report_json(const BacktestReport& r, bool by_band);

}  // namespace halop
