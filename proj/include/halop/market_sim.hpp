#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "halop/lob_core.hpp"

namespace halop {

class SimError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Private execution status at the start of a step.
struct SimState {
  int t = 0;                          // 0-based index of the step about to be taken
  int horizon = 1;
  double remaining_inventory = 1.0;   // 1 - sum of executed volume so far
  double deficit = 0.0;               // schedule shortfall carried into step t
  std::size_t cursor = 0;             // snapshot in force at the decision time
  bool done = false;

  // 1 - (t+1)/T, with t counted from 1 as in the MDP definition.
  double remaining_time() const { return 1.0 - static_cast<double>(t + 1) / horizon; }
};

struct PublicStateConfig {
  int window = 16;  // snapshots
  int levels = 5;   // book levels per side used as features

  int features() const { return 1 + 4 * levels; }
  void validate() const;
};

// Window of the most recent snapshots, row-major (window x features).
// Feature order per row: last, bid1..L, ask1..L, bidv1..L, askv1..L.
struct PublicState {
  int window = 0;
  int features = 0;
  // Prices as scaled returns against the window-start midprice, volumes
  // z-scored over the whole window.
  std::vector<double> standardized;
  // log(price in currency) and log1p(volume).
  std::vector<double> raw_log;
};

// Prices in the standardized rendition are (p / mid0 - 1) * kReturnScale.
inline constexpr double kReturnScale = 1000.0;

PublicState make_public_state(const EpisodeData& episode, std::size_t cursor, const PublicStateConfig& cfg);

// Index of the last snapshot with time_offset <= time. Throws SimError when
// the stream starts after `time`.
std::size_t snapshot_in_force(const EpisodeData& episode, double time);

// Average price (currency) of a market order for `shares`, walking the
// displayed book; volume beyond the fifth level executes at the fifth level.
double walk_the_book(const TickSnapshot& snap, Direction dir, double shares, double tick_size);

double catch_up_volume(const SimState& state, const VolumeSchedule& schedule);

// Market price of trading v*_t at step t (0-based): the walk-the-book price
// at the snapshot in force when an order sent at the step start arrives.
double benchmark_price(const EpisodeData& episode, const VolumeSchedule& schedule, int t);

struct ExecutionTrace {
  std::vector<double> submitted;  // v_t
  std::vector<Fill> fills;
  double final_deficit = 0.0;     // Delta_T, executed by the closing market order
};

struct SettlementReport {
  std::vector<Fill> fills;
  std::vector<double> submitted;
  double final_deficit = 0.0;
  double final_price = 0.0;  // p~_{-1}
  std::vector<double> benchmark_prices;
  double benchmark_notional = 0.0;  // sum v*_t p*_t
  double execution_cost = 0.0;      // sum v~_t p~_t + Delta_T p~_{-1}
  double raw_reward = 0.0;          // D * (benchmark_notional - execution_cost)
  double reward_bps = 0.0;          // raw_reward / benchmark_notional * 1e4
  double submitted_total = 0.0;     // Delta_T + sum v_t
  bool cancellation_violation = false;  // submitted_total > 2
};

SettlementReport settle(const ExecutionTrace& trace, const EpisodeData& episode, const VolumeSchedule& schedule,
                        Direction direction);

struct Observation {
  PublicState pub;
  SimState state;
  Ticks current_price = 0;  // last price at the decision time, in ticks
};

struct StepResult {
  Observation next;
  Fill fill;
  bool done = false;
};

// Replays one episode. Orders become active `latency_seconds` after the step
// starts and are withdrawn at the step end; at most min(v_t, order_cap) is
// executable, and a market order fills no more than the displayed depth.
// After the last step any deficit goes out as a market order that walks past
// the fifth level at the fifth-level price.
class MarketSimulator {
public:
  MarketSimulator(const EpisodeData& episode, VolumeSchedule schedule, PublicStateConfig cfg = {});

  Observation reset();
  StepResult step(const Order& order);

  const SimState& state() const noexcept { return state_; }
  const ExecutionTrace& trace() const noexcept { return trace_; }
  const EpisodeData& episode() const noexcept { return *episode_; }
  const VolumeSchedule& schedule() const noexcept { return schedule_; }
  double required_volume() const { return catch_up_volume(state_, schedule_); }

  // Only valid once done.
  SettlementReport settle() const;

private:
  Observation observe() const;
  double decision_time(int t) const;
  Fill execute_limit(const Order& order, double executable, double start, double end) const;
  Fill execute_market(double executable, double arrival) const;

  const EpisodeData* episode_;
  VolumeSchedule schedule_;
  PublicStateConfig cfg_;
  SimState state_;
  ExecutionTrace trace_;
  bool started_ = false;
};

}  // namespace halop
