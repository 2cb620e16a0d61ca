#include "halop/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace halop {

namespace {

constexpr double kTimeEps = 1e-9;

struct LevelMemory {
  double consumed = 0.0;
  Shares last_displayed = 0;
};

}  // namespace

void PublicStateConfig::validate() const {
  if (window < 1) throw std::invalid_argument("public state window must be >= 1");
  if (levels < 1 || levels > static_cast<int>(kBookDepth)) throw std::invalid_argument("levels must be in [1, 5]");
}

PublicState make_public_state(const EpisodeData& episode, std::size_t cursor, const PublicStateConfig& cfg) {
  cfg.validate();
  if (cursor >= episode.snapshots.size()) throw SimError("public state cursor past end of stream");
  const int W = cfg.window;
  const int L = cfg.levels;
  const int F = cfg.features();
  PublicState ps;
  ps.window = W;
  ps.features = F;
  ps.standardized.assign(static_cast<std::size_t>(W * F), 0.0);
  ps.raw_log.assign(static_cast<std::size_t>(W * F), 0.0);

  // Rows in chronological order; pad with the earliest snapshot if history is short.
  std::vector<const TickSnapshot*> rows(static_cast<std::size_t>(W));
  for (int r = 0; r < W; ++r) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(cursor) - (W - 1 - r);
    rows[static_cast<std::size_t>(r)] = &episode.snapshots[static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, idx))];
  }

  const double mid0 = 0.5 * static_cast<double>(rows.front()->mid2());
  const double tick = episode.spec.tick_size;
  double vol_sum = 0.0;
  for (int r = 0; r < W; ++r) {
    const auto& s = *rows[static_cast<std::size_t>(r)];
    double* std_row = ps.standardized.data() + r * F;
    double* log_row = ps.raw_log.data() + r * F;
    auto put_price = [&](int col, Ticks p) {
      std_row[col] = (static_cast<double>(p) / mid0 - 1.0) * kReturnScale;
      log_row[col] = std::log(static_cast<double>(p) * tick);
    };
    auto put_volume = [&](int col, Shares v) {
      const double x = static_cast<double>(v);
      std_row[col] = x;
      log_row[col] = std::log1p(x);
      vol_sum += x;
    };
    put_price(0, s.last);
    for (int k = 0; k < L; ++k) {
      put_price(1 + k, s.bid_prices[static_cast<std::size_t>(k)]);
      put_price(1 + L + k, s.ask_prices[static_cast<std::size_t>(k)]);
      put_volume(1 + 2 * L + k, s.bid_volumes[static_cast<std::size_t>(k)]);
      put_volume(1 + 3 * L + k, s.ask_volumes[static_cast<std::size_t>(k)]);
    }
  }
  const double n = static_cast<double>(W * 2 * L);
  const double mean = vol_sum / n;
  double var = 0.0;
  for (int r = 0; r < W; ++r) {
    for (int c = 1 + 2 * L; c < F; ++c) {
      const double d = ps.standardized[static_cast<std::size_t>(r * F + c)] - mean;
      var += d * d;
    }
  }
  const double sd = std::sqrt(var / n);
  for (int r = 0; r < W; ++r) {
    for (int c = 1 + 2 * L; c < F; ++c) {
      double& x = ps.standardized[static_cast<std::size_t>(r * F + c)];
      x = sd > 0.0 ? (x - mean) / sd : 0.0;
    }
  }
  return ps;
}

std::size_t snapshot_in_force(const EpisodeData& episode, double time) {
  const auto& snaps = episode.snapshots;
  auto it = std::upper_bound(snaps.begin(), snaps.end(), time + kTimeEps,
                             [](double t, const TickSnapshot& s) { return t < s.time_offset; });
  if (it == snaps.begin()) throw SimError("no snapshot at or before t=" + std::to_string(time));
  return static_cast<std::size_t>(std::distance(snaps.begin(), it) - 1);
}

double walk_the_book(const TickSnapshot& snap, Direction dir, double shares, double tick_size) {
  if (shares <= 0.0) return 0.0;
  const auto& prices = dir == Direction::Buy ? snap.ask_prices : snap.bid_prices;
  const auto& volumes = dir == Direction::Buy ? snap.ask_volumes : snap.bid_volumes;
  double remaining = shares;
  double notional = 0.0;
  for (std::size_t k = 0; k < kBookDepth && remaining > 0.0; ++k) {
    const double take = std::min(remaining, static_cast<double>(volumes[k]));
    notional += take * static_cast<double>(prices[k]);
    remaining -= take;
  }
  if (remaining > 0.0) notional += remaining * static_cast<double>(prices[kBookDepth - 1]);
  return notional / shares * tick_size;
}

double catch_up_volume(const SimState& state, const VolumeSchedule& schedule) {
  if (state.t < 0 || static_cast<std::size_t>(state.t) >= schedule.size()) {
    throw SimError("step index outside the schedule");
  }
  return schedule[static_cast<std::size_t>(state.t)] + state.deficit;
}

double benchmark_price(const EpisodeData& episode, const VolumeSchedule& schedule, int t) {
  if (t < 0 || t >= episode.spec.horizon || static_cast<std::size_t>(t) >= schedule.size()) {
    throw SimError("benchmark step outside the horizon");
  }
  const auto& spec = episode.spec;
  const double arrival = spec.start_offset_s + t * spec.step_seconds + spec.latency_seconds;
  const auto& snap = episode.snapshots[snapshot_in_force(episode, arrival)];
  const double shares = schedule[static_cast<std::size_t>(t)] * spec.inventory_shares;
  if (shares <= 0.0) {
    // Zero-volume target: the touch price, which has zero weight anyway.
    return walk_the_book(snap, spec.direction, 1.0, spec.tick_size);
  }
  return walk_the_book(snap, spec.direction, shares, spec.tick_size);
}

SettlementReport settle(const ExecutionTrace& trace, const EpisodeData& episode, const VolumeSchedule& schedule,
                        Direction direction) {
  const auto& spec = episode.spec;
  const int T = spec.horizon;
  if (static_cast<int>(trace.fills.size()) != T || static_cast<int>(trace.submitted.size()) != T) {
    throw SimError("settlement needs a finished episode");
  }
  SettlementReport rep;
  rep.fills = trace.fills;
  rep.submitted = trace.submitted;
  rep.final_deficit = trace.final_deficit;

  const auto& close_snap = episode.snapshots[snapshot_in_force(episode, spec.mission_end())];
  // With nothing left over the touch price is reported; it carries zero weight.
  const double closing_shares = trace.final_deficit * spec.inventory_shares;
  rep.final_price = walk_the_book(close_snap, direction, closing_shares > 0.0 ? closing_shares : 1.0, spec.tick_size);

  rep.benchmark_prices.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    rep.benchmark_prices[static_cast<std::size_t>(t)] = benchmark_price(episode, schedule, t);
  }
  double bench = 0.0;
  double cost = 0.0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(T); ++t) {
    bench += schedule[t] * rep.benchmark_prices[t];
    if (trace.fills[t].executed > 0.0) cost += trace.fills[t].executed * trace.fills[t].avg_price;
  }
  cost += trace.final_deficit * rep.final_price;
  rep.benchmark_notional = bench;
  rep.execution_cost = cost;
  rep.raw_reward = sign(direction) * (bench - cost);
  rep.reward_bps = bench > 0.0 ? rep.raw_reward / bench * 1e4 : 0.0;
  rep.submitted_total = std::accumulate(trace.submitted.begin(), trace.submitted.end(), trace.final_deficit);
  rep.cancellation_violation = rep.submitted_total > 2.0;
  return rep;
}

MarketSimulator::MarketSimulator(const EpisodeData& episode, VolumeSchedule schedule, PublicStateConfig cfg)
    : episode_(&episode), schedule_(std::move(schedule)), cfg_(cfg) {
  episode.spec.validate();
  cfg_.validate();
  if (static_cast<int>(schedule_.size()) != episode.spec.horizon) {
    throw std::invalid_argument("schedule length differs from the horizon");
  }
}

double MarketSimulator::decision_time(int t) const {
  return episode_->spec.start_offset_s + t * episode_->spec.step_seconds;
}

Observation MarketSimulator::observe() const {
  Observation obs;
  obs.state = state_;
  obs.pub = make_public_state(*episode_, state_.cursor, cfg_);
  obs.current_price = episode_->snapshots[state_.cursor].last;
  return obs;
}

Observation MarketSimulator::reset() {
  const auto& snaps = episode_->snapshots;
  if (snaps.empty()) throw SimError("episode has no snapshots");
  if (snaps.front().time_offset > episode_->spec.start_offset_s + kTimeEps ||
      snaps.back().time_offset + kTimeEps < episode_->spec.mission_end()) {
    throw SimError("snapshots do not cover the mission window");
  }
  state_ = SimState{};
  state_.horizon = episode_->spec.horizon;
  state_.cursor = snapshot_in_force(*episode_, decision_time(0));
  trace_ = ExecutionTrace{};
  started_ = true;
  return observe();
}

Fill MarketSimulator::execute_market(double executable, double arrival) const {
  const auto& spec = episode_->spec;
  Fill f;
  f.executed = executable;
  const auto& snap = episode_->snapshots[snapshot_in_force(*episode_, arrival)];
  double shares = executable * spec.inventory_shares;
  // Fills stop at the displayed depth; the rest is cancelled.
  double displayed = 0.0;
  for (Shares v : spec.direction == Direction::Buy ? snap.ask_volumes : snap.bid_volumes) {
    displayed += static_cast<double>(v);
  }
  if (shares > displayed) {
    shares = displayed;
    f.executed = displayed / spec.inventory_shares;
  }
  f.avg_price = walk_the_book(snap, spec.direction, shares > 0.0 ? shares : 1.0, spec.tick_size);
  return f;
}

Fill MarketSimulator::execute_limit(const Order& order, double executable, double start, double end) const {
  const auto& spec = episode_->spec;
  const auto& snaps = episode_->snapshots;
  const bool buy = spec.direction == Direction::Buy;
  const double need = executable * spec.inventory_shares;
  double filled = 0.0;
  double notional = 0.0;
  bool complete = need <= 0.0;
  std::map<Ticks, LevelMemory> memory;

  for (std::size_t i = snapshot_in_force(*episode_, start); i < snaps.size() && !complete; ++i) {
    const auto& s = snaps[i];
    if (i != snapshot_in_force(*episode_, start) && s.time_offset >= end - kTimeEps) break;
    const auto& prices = buy ? s.ask_prices : s.bid_prices;
    const auto& volumes = buy ? s.ask_volumes : s.bid_volumes;
    for (std::size_t k = 0; k < kBookDepth && !complete; ++k) {
      const bool marketable = buy ? prices[k] <= order.limit_price : prices[k] >= order.limit_price;
      if (!marketable) break;
      auto& mem = memory[prices[k]];
      if (volumes[k] > mem.last_displayed) mem.consumed = 0.0;
      mem.last_displayed = volumes[k];
      const double avail = static_cast<double>(volumes[k]) - mem.consumed;
      if (avail <= 0.0) continue;
      const double remaining = need - filled;
      if (avail >= remaining) {
        notional += remaining * static_cast<double>(prices[k]);
        mem.consumed += remaining;
        filled = need;
        complete = true;
      } else {
        notional += avail * static_cast<double>(prices[k]);
        mem.consumed += avail;
        filled += avail;
      }
    }
  }

  Fill f;
  if (complete) {
    f.executed = executable;
  } else {
    f.executed = filled / spec.inventory_shares;
  }
  f.avg_price = filled > 0.0 ? notional / filled * spec.tick_size : 0.0;
  return f;
}

StepResult MarketSimulator::step(const Order& order) {
  if (!started_) throw SimError("step before reset");
  if (state_.done) throw SimError("episode already finished");
  if (order.step != state_.t) throw SimError("order step does not match the simulator step");
  const double v = required_volume();
  if (std::abs(order.volume - v) > 1e-12 * std::max(1.0, std::abs(v))) {
    throw SimError("order volume must equal the catch-up volume");
  }
  if (order.kind == OrderKind::Limit && order.limit_price <= 0) throw SimError("limit price must be positive");

  const auto& spec = episode_->spec;
  const double start = decision_time(state_.t);
  const double arrival = start + spec.latency_seconds;
  const double end = start + spec.step_seconds;
  const double executable = std::min(v, spec.order_cap);

  Fill f = order.kind == OrderKind::Market ? execute_market(executable, arrival)
                                           : execute_limit(order, executable, arrival, end);
  f.cancelled = v - f.executed;

  trace_.submitted.push_back(v);
  trace_.fills.push_back(f);
  state_.remaining_inventory = std::max(0.0, state_.remaining_inventory - f.executed);
  state_.deficit = v - f.executed;
  ++state_.t;

  StepResult out;
  out.fill = f;
  if (state_.t >= spec.horizon) {
    state_.done = true;
    trace_.final_deficit = state_.deficit;
    out.done = true;
    out.next.state = state_;
    out.next.current_price = episode_->snapshots[snapshot_in_force(*episode_, end)].last;
    return out;
  }
  state_.cursor = snapshot_in_force(*episode_, decision_time(state_.t));
  out.next = observe();
  return out;
}

SettlementReport MarketSimulator::settle() const {
  if (!state_.done) throw SimError("settlement before the episode finished");
  return halop::settle(trace_, *episode_, schedule_, episode_->spec.direction);
}

}  // namespace halop
