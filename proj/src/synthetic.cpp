#include "halop/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "halop/rng.hpp"

namespace halop {

void SynthParams::validate() const {
  episode.validate();
  if (!(base_price > 0.0)) throw std::invalid_argument("base price must be positive");
  if (volatility < 0.0 || volatility > 0.5) throw std::invalid_argument("volatility must be in [0, 0.5]");
  if (mean_reversion < 0.0) throw std::invalid_argument("mean reversion must be non-negative");
  if (spread_ticks < 1) throw std::invalid_argument("spread must be at least one tick");
  if (spread_widen_prob < 0.0 || spread_widen_prob > 1.0) throw std::invalid_argument("bad spread widen probability");
  if (!(depth_shares > 0.0)) throw std::invalid_argument("depth must be positive");
  if (depth_noise < 0.0) throw std::invalid_argument("depth noise must be non-negative");
  if (intraday_u_shape < 0.0) throw std::invalid_argument("u-shape must be non-negative");
  if (!(snapshot_interval > 0.0)) throw std::invalid_argument("snapshot interval must be positive");
  if (history_snapshots < 0) throw std::invalid_argument("history must be non-negative");
}

double band_depth_multiplier(PriceBand band) {
  switch (band) {
    case PriceBand::Low: return 0.5;
    case PriceBand::Medium: return 1.0;
    case PriceBand::High: return 1.5;
  }
  return 1.0;
}

EpisodeData generate_synthetic_day(const SynthParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);

  EpisodeData ep;
  ep.spec = params.episode;
  ep.spec.start_offset_s = params.history_snapshots * params.snapshot_interval;
  const double tick = ep.spec.tick_size;
  const Ticks anchor = std::max<Ticks>(static_cast<Ticks>(std::llround(params.base_price / tick)),
                                       static_cast<Ticks>(kBookDepth) + 1);
  // Lowest admissible best bid keeps all five bid levels positive.
  const Ticks floor_bid = static_cast<Ticks>(kBookDepth);

  const double end = ep.spec.mission_end() + params.snapshot_interval;
  const auto rows = static_cast<std::size_t>(std::ceil(end / params.snapshot_interval)) + 1;
  const double depth = params.depth_shares * band_depth_multiplier(price_band(params.base_price));

  Ticks bid = anchor;
  int spread = params.spread_ticks;
  Ticks last = bid;
  ep.snapshots.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = static_cast<double>(i) * params.snapshot_interval;
    if (i > 0) {
      const double u = rng.uniform();
      if (u < params.volatility) {
        const double displacement = static_cast<double>(bid - anchor);
        const double p_up = std::clamp(0.5 - params.mean_reversion * displacement, 0.05, 0.95);
        const bool up = rng.uniform() < p_up || bid <= floor_bid;
        const Ticks old_bid = bid;
        const Ticks old_ask = bid + spread;
        bid += up ? 1 : -1;
        // An up-move lifts the ask, a down-move hits the bid.
        last = up ? old_ask : old_bid;
      } else if (u < 2.0 * params.volatility) {
        last = rng.uniform() < 0.5 ? bid : bid + spread;
      }
      if (params.spread_widen_prob > 0.0) {
        spread = params.spread_ticks + (rng.uniform() < params.spread_widen_prob ? 1 : 0);
      }
    }
    // Keep last inside the current book's touch range so it stays sensible.
    last = std::clamp(last, bid, bid + spread);

    const double x = end > 0.0 ? t / end : 0.0;
    const double activity = 1.0 + params.intraday_u_shape * (2.0 * x - 1.0) * (2.0 * x - 1.0);

    TickSnapshot s;
    s.time_offset = t;
    s.last = last;
    for (std::size_t k = 0; k < kBookDepth; ++k) {
      s.bid_prices[k] = bid - static_cast<Ticks>(k);
      s.ask_prices[k] = bid + spread + static_cast<Ticks>(k);
      const double level_shape = 1.0 + 0.25 * static_cast<double>(k);
      auto draw = [&] {
        const double noise = std::exp(params.depth_noise * rng.normal() - 0.5 * params.depth_noise * params.depth_noise);
        return std::max<Shares>(1, static_cast<Shares>(std::llround(depth * activity * level_shape * noise)));
      };
      s.bid_volumes[k] = draw();
      s.ask_volumes[k] = draw();
    }
    ep.snapshots.push_back(s);
  }
  return ep;
}

}  // namespace halop
