#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "halop/eval_metrics.hpp"
#include "halop/synthetic.hpp"
#include "test_util.hpp"

using namespace halop;

namespace {

EpisodeResult result(double r, bool violation = false, double close = 20.0) {
  EpisodeResult e;
  e.stock_id = "S";
  e.day = "20200102";
  e.excess_return_bps = r;
  e.cancellation_violation = violation;
  e.close_price = close;
  e.band = price_band(close);
  return e;
}

// Flat book (bid 9.99, ask 10.00) except that ten seconds into every step the
// whole book drops one tick for a single snapshot.
EpisodeData dipping_episode() {
  EpisodeData ep;
  ep.spec.stock_id = "DIP";
  ep.spec.trading_day = "20200106";
  ep.spec.horizon = 3;
  ep.spec.step_seconds = 30;
  ep.spec.order_cap = 1.0;
  ep.spec.inventory_shares = 1000;
  for (double t = 0.0; t <= ep.spec.mission_end() + 3.0; t += 1.0) {
    const bool dip = std::fmod(t, 30.0) == 10.0;
    ep.snapshots.push_back(dip ? tu::flat_snapshot(t, 998, 999) : tu::flat_snapshot(t, 999, 1000));
  }
  return ep;
}

ScheduleFn twap() {
  return [](const EpisodeData& e) { return twap_schedule(e.spec.horizon); };
}

}  // namespace

TEST(Twap, Examples) {
  const VolumeSchedule s = twap_schedule(90);
  ASSERT_EQ(s.size(), 90u);
  for (std::size_t i = 0; i < 90; ++i) EXPECT_DOUBLE_EQ(s[i], 1.0 / 90.0);
  EXPECT_EQ(twap_schedule(1)[0], 1.0);
  EXPECT_THROW(twap_schedule(0), std::invalid_argument);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const int T = 1 + static_cast<int>(rng.below(10000));
    const VolumeSchedule v = twap_schedule(T);
    double sum = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) sum += v[k];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Vwap, Examples) {
  const VolumeSchedule one = vwap_schedule({{0.5, 0.3, 0.2}});
  EXPECT_NEAR(one[0], 0.5, 1e-15);
  EXPECT_NEAR(one[1], 0.3, 1e-15);
  EXPECT_NEAR(one[2], 0.2, 1e-15);
  const VolumeSchedule two = vwap_schedule({{0.6, 0.4}, {0.2, 0.8}});
  EXPECT_NEAR(two[0], 0.4, 1e-15);
  EXPECT_NEAR(two[1], 0.6, 1e-15);
  const VolumeSchedule flat = vwap_schedule({{5.0, 5.0, 5.0, 5.0}, {1.0, 1.0, 1.0, 1.0}});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(flat[i], 0.25, 1e-15);
}

TEST(Vwap, RawVolumesAreTurnedIntoShares) {
  // (60, 40) and (2, 8): shares (0.6, 0.4) and (0.2, 0.8).
  const VolumeSchedule v = vwap_schedule({{60.0, 40.0}, {2.0, 8.0}});
  EXPECT_NEAR(v[0], 0.4, 1e-15);
}

TEST(Vwap, LookbackUsesMostRecentDays) {
  std::vector<std::vector<double>> h(30, {1.0, 0.0});
  h.back() = {0.0, 1.0};
  const VolumeSchedule v = vwap_schedule(h, 2);
  EXPECT_NEAR(v[0], 0.5, 1e-15);
}

TEST(Vwap, ZeroVolumeFallsBack) {
  bool fell_back = false;
  const VolumeSchedule v = vwap_schedule({{0.0, 0.0, 0.0}}, 21, &fell_back);
  EXPECT_TRUE(fell_back);
  EXPECT_NEAR(v[1], 1.0 / 3.0, 1e-15);
  EXPECT_THROW(vwap_schedule({}), std::invalid_argument);
  EXPECT_THROW(vwap_schedule({{1.0, 2.0}, {1.0}}), std::invalid_argument);
}

TEST(VolumeCurve, CountsTouchVolumeChanges) {
  EpisodeData ep = tu::flat_episode(2, 30, 1000, 1000, 10.0);
  // Snapshots at 0, 10, ..., 70; the step-0 window is [0, 30).
  ep.snapshots[1].bid_volumes[0] = 1300;
  const auto c = interval_volume_curve(ep);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], 600.0);  // +300 then -300
  EXPECT_EQ(c[1], 0.0);
}

TEST(Metrics, HandComputedExample) {
  const MetricsReport m = compute_metrics({result(0), result(2), result(4)});
  const double std_pop = std::sqrt(8.0 / 3.0);
  EXPECT_EQ(m.n, 3u);
  EXPECT_NEAR(m.return_bps, 2.0, 1e-12);
  EXPECT_NEAR(m.std_bps, std_pop, 1e-12);
  EXPECT_NEAR(m.std_bps, 1.63299, 1e-5);
  EXPECT_NEAR(m.t_value, 2.0 / (std_pop / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(m.t_value, std::sqrt(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(m.pnl_bps, m.return_bps);
}

TEST(Metrics, CancellationPenalty) {
  const MetricsReport m = compute_metrics({result(1), result(2, true), result(3), result(6)});
  EXPECT_NEAR(m.return_bps, 3.0, 1e-12);
  EXPECT_NEAR(m.pnl_bps, 3.0 - 1.25, 1e-12);
  EXPECT_NEAR(m.violation_rate, 0.25, 1e-15);
}

TEST(Metrics, AllEqualReturns) {
  const MetricsReport pos = compute_metrics({result(1.5), result(1.5), result(1.5)});
  EXPECT_EQ(pos.std_bps, 0.0);
  EXPECT_TRUE(std::isinf(pos.t_value) && pos.t_value > 0);
  EXPECT_FALSE(pos.warnings.empty());
  const MetricsReport zero = compute_metrics({result(0.0), result(0.0)});
  EXPECT_EQ(zero.t_value, 0.0);
  EXPECT_EQ(to_json(pos).at("t_value"), "inf");
}

TEST(Metrics, NeedsTwoEpisodes) {
  EXPECT_THROW(compute_metrics({result(1.0)}), std::invalid_argument);
  EXPECT_THROW(compute_metrics({}), std::invalid_argument);
}

TEST(Metrics, PermutationInvariantAndPnlBound) {
  Rng rng(2);
  std::vector<EpisodeResult> rs;
  for (int i = 0; i < 40; ++i) rs.push_back(result(rng.normal() * 3.0, rng.uniform() < 0.2));
  const MetricsReport a = compute_metrics(rs);
  std::reverse(rs.begin(), rs.end());
  std::swap(rs[3], rs[17]);
  const MetricsReport b = compute_metrics(rs);
  EXPECT_NEAR(a.return_bps, b.return_bps, 1e-12);
  EXPECT_NEAR(a.std_bps, b.std_bps, 1e-12);
  EXPECT_NEAR(a.t_value, b.t_value, 1e-9);
  EXPECT_LE(a.pnl_bps, a.return_bps);
}

TEST(Grouping, BandsPartitionEpisodes) {
  std::vector<EpisodeResult> rs{result(1, false, 9.99), result(2, false, 10.00), result(3, false, 50.00),
                                result(4, false, 50.01), result(5, false, 3.0),   result(6, false, 70.0)};
  EXPECT_EQ(rs[0].band, PriceBand::Low);
  EXPECT_EQ(rs[1].band, PriceBand::Medium);
  EXPECT_EQ(rs[2].band, PriceBand::Medium);
  EXPECT_EQ(rs[3].band, PriceBand::High);
  const GroupingReport g = grouping_report(rs);
  std::size_t total = 0;
  for (const auto& b : g.bands) {
    total += b.n;
    ASSERT_TRUE(b.metrics.has_value());
  }
  EXPECT_EQ(total, rs.size());
  ASSERT_EQ(g.bands.size(), 3u);
  EXPECT_NEAR(g.bands[0].metrics->return_bps, 3.0, 1e-12);
}

TEST(Grouping, SmallBandHasNote) {
  const GroupingReport g = grouping_report({result(1, false, 5.0), result(2, false, 20.0), result(3, false, 30.0)});
  ASSERT_EQ(g.bands.size(), 2u);
  EXPECT_FALSE(g.bands[0].metrics.has_value());
  EXPECT_FALSE(g.notes.empty());
}

TEST(RunStrategy, MarketOrdersGiveZeroEverything) {
  std::vector<EpisodeData> eps;
  for (std::uint64_t s = 0; s < 12; ++s) {
    SynthParams p;
    p.base_price = 2.0 + 6.0 * static_cast<double>(s);
    p.episode.horizon = 8;
    p.episode.step_seconds = 30;
    p.episode.stock_id = "S" + std::to_string(s);
    eps.push_back(generate_synthetic_day(p, s));
  }
  std::vector<const EpisodeData*> ptrs;
  for (const auto& e : eps) ptrs.push_back(&e);
  const auto rs = run_strategy(Strategy{}, ptrs, twap(), PublicStateConfig{});
  ASSERT_EQ(rs.size(), eps.size());
  for (const auto& r : rs) {
    EXPECT_NEAR(r.excess_return_bps, 0.0, 1e-9);
    EXPECT_FALSE(r.cancellation_violation);
  }
  const MetricsReport m = compute_metrics(rs);
  EXPECT_NEAR(m.return_bps, 0.0, 1e-9);
  EXPECT_NEAR(m.std_bps, 0.0, 1e-9);
  EXPECT_NEAR(m.pnl_bps, 0.0, 1e-9);
  EXPECT_EQ(m.t_value, 0.0);
}

TEST(RunStrategy, FixedOffsetOnDippingBook) {
  const EpisodeData ep = dipping_episode();
  Strategy s;
  s.kind = StrategyKind::FixedOffset;
  s.offset_ticks = -1;
  const EpisodeResult r = run_episode(s, ep, twap_schedule(3), PublicStateConfig{});
  // Every step fills at 9.99 against a 10.00 benchmark: (10.00 - 9.99) / 10.00.
  EXPECT_NEAR(r.excess_return_bps, 10.0, 1e-9);
  EXPECT_NEAR(r.submitted_total, 1.0, 1e-12);
  EXPECT_FALSE(r.cancellation_violation);
}

TEST(RunStrategy, FixedOffsetNeverFilledOnFlatBook) {
  EpisodeData ep = tu::flat_episode(3, 30, 999);
  ep.spec.order_cap = 1.0;
  ep.spec.inventory_shares = 1000;
  Strategy s;
  s.kind = StrategyKind::FixedOffset;
  s.offset_ticks = -1;
  const EpisodeResult r = run_episode(s, ep, twap_schedule(3), PublicStateConfig{});
  EXPECT_NEAR(r.excess_return_bps, 0.0, 1e-9);  // all volume goes out at the close at the same ask
  EXPECT_TRUE(r.cancellation_violation);
}

TEST(RunStrategy, ErrorsAreSkippedAndReported) {
  EpisodeData bad = tu::flat_episode(3, 30, 999);
  bad.snapshots.resize(2);
  const EpisodeData good = tu::flat_episode(3, 30, 999);
  std::vector<std::string> errors;
  const auto rs = run_strategy(Strategy{}, {&bad, &good}, twap(), PublicStateConfig{}, &errors);
  EXPECT_EQ(rs.size(), 1u);
  EXPECT_EQ(errors.size(), 1u);
}

TEST(StrategyNames, Parse) {
  EXPECT_EQ(strategy_kind_from_string("market-order"), StrategyKind::MarketOrder);
  EXPECT_EQ(strategy_kind_from_string("fixed-offset"), StrategyKind::FixedOffset);
  EXPECT_EQ(strategy_kind_from_string("policy"), StrategyKind::Policy);
  EXPECT_THROW(strategy_kind_from_string("twap"), std::invalid_argument);
}

TEST(Reports, JsonRoundTripAndRenderings) {
  std::vector<EpisodeResult> rs{result(1, false, 5.0), result(2, true, 6.0), result(-1, false, 20.0),
                                result(0.5, false, 25.0)};
  const BacktestReport rep = make_report("fixed-offset(-1)", "twap", rs, {"note"});
  const BacktestReport back = backtest_report_from_json(to_json(rep));
  EXPECT_EQ(to_json(back), to_json(rep));
  EXPECT_EQ(back.episodes.size(), 4u);
  const std::string csv = report_csv(rep, true);
  EXPECT_NE(csv.find("low"), std::string::npos);
  EXPECT_NE(csv.find("medium"), std::string::npos);
  const std::string md = report_markdown(rep, false);
  EXPECT_NE(md.find("|"), std::string::npos);
  const auto j = report_json(rep, true);
  EXPECT_TRUE(j.contains("bands"));
  EXPECT_THROW(backtest_report_from_json(nlohmann::json{{"format", "other"}}), std::exception);
}
