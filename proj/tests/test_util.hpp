#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "halop/lob_core.hpp"

namespace halop::tu {

// Contiguous book: best bid `bid`, spread `spread`, `depth` shares per level.
inline TickSnapshot flat_snapshot(double t, Ticks bid, Ticks last, Shares depth = 1000, Ticks spread = 1) {
  TickSnapshot s;
  s.time_offset = t;
  s.last = last;
  for (std::size_t k = 0; k < kBookDepth; ++k) {
    s.bid_prices[k] = bid - static_cast<Ticks>(k);
    s.ask_prices[k] = bid + spread + static_cast<Ticks>(k);
    s.bid_volumes[k] = depth;
    s.ask_volumes[k] = depth;
  }
  return s;
}

// Episode whose book never moves; one snapshot every `interval` seconds.
inline EpisodeData flat_episode(int horizon, double step_seconds, Ticks bid, Shares depth = 1000,
                                double interval = 3.0) {
  EpisodeData ep;
  ep.spec.stock_id = "FLAT";
  ep.spec.trading_day = "20200102";
  ep.spec.horizon = horizon;
  ep.spec.step_seconds = step_seconds;
  const double end = ep.spec.mission_end() + interval;
  for (double t = 0.0; t <= end; t += interval) ep.snapshots.push_back(flat_snapshot(t, bid, bid + 1, depth));
  return ep;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("halop_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace halop::tu
