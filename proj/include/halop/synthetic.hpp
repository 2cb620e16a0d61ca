#pragma once

#include <cstdint>

#include "halop/lob_core.hpp"

namespace halop {

// Dynamics of one synthetic (stock, day) stream. The best bid follows a
// mean-reverting walk on the tick grid around `base_price`; the book is
// contiguous on the grid behind the touch.
struct SynthParams {
  EpisodeSpec episode;
  double base_price = 10.0;        // currency
  double volatility = 0.15;        // probability of a one-tick move per snapshot
  double mean_reversion = 0.05;    // drift toward base, per tick of displacement
  int spread_ticks = 1;            // minimum spread
  double spread_widen_prob = 0.0;  // chance of one extra tick of spread
  double depth_shares = 2000.0;    // mean displayed shares at the touch
  double depth_noise = 0.3;        // log-normal noise on level depth
  double intraday_u_shape = 0.5;   // activity multiplier 1 + u*(2x-1)^2 over the day
  double snapshot_interval = 3.0;  // seconds
  int history_snapshots = 0;       // rows generated before the mission starts

  void validate() const;
};

// Depth multiplier applied by price band; low-priced names are thinner.
double band_depth_multiplier(PriceBand band);

// Deterministic in (params, seed). Output passes validate_snapshot, covers
// [0, mission end] and has spec.start_offset_s = history * interval.
EpisodeData generate_synthetic_day(const SynthParams& params, std::uint64_t seed);

}  // namespace halop
