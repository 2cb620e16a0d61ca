#include "halop/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace halop {

using nlohmann::json;

namespace {

std::uint64_t string_seed(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PriceBand band_from_string(const std::string& s) {
  if (s == "low") return PriceBand::Low;
  if (s == "medium") return PriceBand::Medium;
  if (s == "high") return PriceBand::High;
  throw std::invalid_argument("unknown price band '" + s + "'");
}

json number_or_inf(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double parse_number(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad number '" + s + "'");
  }
  return j.get<double>();
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  m.n = j.at("n").get<std::size_t>();
  m.return_bps = j.at("return_bps").get<double>();
  m.std_bps = j.at("std_bps").get<double>();
  m.t_value = parse_number(j.at("t_value"));
  m.pnl_bps = j.at("pnl_bps").get<double>();
  m.violation_rate = j.value("violation_rate", 0.0);
  m.warnings = j.value("warnings", std::vector<std::string>{});
  return m;
}

std::string fmt(double x, int prec = 4) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

}  // namespace

VolumeSchedule twap_schedule(int T) {
  if (T < 1) throw std::invalid_argument("TWAP needs T >= 1");
  return VolumeSchedule{std::vector<double>(static_cast<std::size_t>(T), 1.0 / T)};
}

VolumeSchedule vwap_schedule(const std::vector<std::vector<double>>& history, int lookback, bool* fell_back) {
  if (history.empty()) throw std::invalid_argument("VWAP needs at least one prior day");
  if (lookback < 1) throw std::invalid_argument("VWAP lookback must be >= 1");
  const std::size_t T = history.front().size();
  if (T == 0) throw std::invalid_argument("empty volume curve");
  const std::size_t first = history.size() > static_cast<std::size_t>(lookback) ? history.size() - lookback : 0;
  std::vector<double> acc(T, 0.0);
  int used = 0;
  for (std::size_t d = first; d < history.size(); ++d) {
    const auto& curve = history[d];
    if (curve.size() != T) throw std::invalid_argument("volume curves differ in length");
    const double total = std::accumulate(curve.begin(), curve.end(), 0.0);
    if (!(total > 0.0)) continue;
    for (std::size_t t = 0; t < T; ++t) acc[t] += curve[t] / total;
    ++used;
  }
  if (fell_back) *fell_back = used == 0;
  if (used == 0) return twap_schedule(static_cast<int>(T));
  const double sum = std::accumulate(acc.begin(), acc.end(), 0.0);
  for (double& x : acc) x /= sum;
  return VolumeSchedule{std::move(acc)};
}

std::vector<double> interval_volume_curve(const EpisodeData& episode) {
  const auto& spec = episode.spec;
  std::vector<double> curve(static_cast<std::size_t>(spec.horizon), 0.0);
  const auto& snaps = episode.snapshots;
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    const double rel = snaps[i].time_offset - spec.start_offset_s;
    if (rel < 0.0 || rel >= spec.horizon * spec.step_seconds) continue;
    const auto t = static_cast<std::size_t>(rel / spec.step_seconds);
    const double db = std::abs(static_cast<double>(snaps[i].bid_volumes[0] - snaps[i - 1].bid_volumes[0]));
    const double da = std::abs(static_cast<double>(snaps[i].ask_volumes[0] - snaps[i - 1].ask_volumes[0]));
    curve[std::min(t, curve.size() - 1)] += db + da;
  }
  return curve;
}

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::MarketOrder: return "market-order";
    case StrategyKind::FixedOffset: return "fixed-offset";
    case StrategyKind::Policy: return "policy";
  }
  return "?";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "market-order" || s == "market") return StrategyKind::MarketOrder;
  if (s == "fixed-offset") return StrategyKind::FixedOffset;
  if (s == "policy") return StrategyKind::Policy;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

EpisodeResult run_episode(const Strategy& strategy, const EpisodeData& episode, const VolumeSchedule& schedule,
                          const PublicStateConfig& state_cfg, const DecisionSink& sink) {
  if (strategy.kind == StrategyKind::Policy && strategy.agent == nullptr) {
    throw std::invalid_argument("policy strategy without an agent");
  }
  const auto& spec = episode.spec;
  MarketSimulator sim(episode, schedule, state_cfg);
  Observation obs = sim.reset();
  Rng rng(mix_seed(strategy.seed, string_seed(spec.stock_id + "_" + spec.trading_day)));
  EpisodeResult res;
  for (int t = 0; t < spec.horizon; ++t) {
    Order order;
    order.step = t;
    order.volume = sim.required_volume();
    switch (strategy.kind) {
      case StrategyKind::MarketOrder:
        order.kind = OrderKind::Market;
        break;
      case StrategyKind::FixedOffset:
        order.kind = OrderKind::Limit;
        order.limit_price = std::max<Ticks>(1, obs.current_price + strategy.offset_ticks);
        break;
      case StrategyKind::Policy: {
        const StepInput in = make_step_input(obs, spec);
        const HalopDecision d = strategy.agent->act(in, strategy.mode, rng);
        if (d.clamped) ++res.clamped_prices;
        if (sink) sink(episode, t, d, in);
        order.kind = OrderKind::Limit;
        order.limit_price = d.limit_price;
        break;
      }
    }
    obs = sim.step(order).next;
  }
  const SettlementReport rep = sim.settle();

  // Benchmark: market orders under TWAP on the same episode, including any
  // deficit the order cap forces into later steps.
  const VolumeSchedule twap = twap_schedule(spec.horizon);
  MarketSimulator mo(episode, twap, state_cfg);
  mo.reset();
  while (!mo.state().done) mo.step(Order{mo.state().t, OrderKind::Market, 0, mo.required_volume()});
  const SettlementReport bench = mo.settle();
  res.stock_id = spec.stock_id;
  res.day = spec.trading_day;
  res.close_price = episode.close_price();
  res.band = price_band(res.close_price);
  res.excess_return_bps =
      sign(spec.direction) * (bench.execution_cost - rep.execution_cost) / bench.benchmark_notional * 1e4;
  res.reward_bps = rep.reward_bps;
  res.submitted_total = rep.submitted_total;
  res.cancellation_violation = rep.cancellation_violation;
  return res;
}

std::vector<EpisodeResult> run_strategy(const Strategy& strategy, const std::vector<const EpisodeData*>& episodes,
                                        const ScheduleFn& schedule, const PublicStateConfig& state_cfg,
                                        std::vector<std::string>* errors, const DecisionSink& sink) {
  std::vector<EpisodeResult> out;
  out.reserve(episodes.size());
  for (const EpisodeData* ep : episodes) {
    try {
      out.push_back(run_episode(strategy, *ep, schedule(*ep), state_cfg, sink));
    } catch (const std::exception& e) {
      const std::string msg = ep->spec.stock_id + "_" + ep->spec.trading_day + ": " + e.what();
      if (errors) errors->push_back(msg);
    }
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<EpisodeResult>& results) {
  const std::size_t n = results.size();
  if (n < 2) throw std::invalid_argument("metrics need at least two episodes");
  MetricsReport m;
  m.n = n;
  const double dn = static_cast<double>(n);
  double sum = 0.0;
  double violations = 0.0;
  for (const auto& r : results) {
    sum += r.excess_return_bps;
    if (r.cancellation_violation) violations += 1.0;
  }
  m.return_bps = sum / dn;
  const bool all_equal = std::all_of(results.begin(), results.end(), [&](const EpisodeResult& r) {
    return r.excess_return_bps == results.front().excess_return_bps;
  });
  if (!all_equal) {
    double var = 0.0;
    for (const auto& r : results) var += (r.excess_return_bps - m.return_bps) * (r.excess_return_bps - m.return_bps);
    m.std_bps = std::sqrt(var / dn);
  }
  if (m.std_bps > 0.0) {
    m.t_value = m.return_bps / (m.std_bps / std::sqrt(dn - 1.0));
  } else if (m.return_bps == 0.0) {
    m.t_value = 0.0;
  } else {
    m.t_value = std::copysign(std::numeric_limits<double>::infinity(), m.return_bps);
    m.warnings.push_back("zero standard deviation; t-value reported as infinite");
  }
  m.violation_rate = violations / dn;
  m.pnl_bps = m.return_bps - 5.0 * m.violation_rate;
  return m;
}

GroupingReport grouping_report(const std::vector<EpisodeResult>& results) {
  GroupingReport g;
  for (PriceBand band : {PriceBand::Low, PriceBand::Medium, PriceBand::High}) {
    std::vector<EpisodeResult> sub;
    for (const auto& r : results) {
      if (r.band == band) sub.push_back(r);
    }
    if (sub.empty()) continue;
    BandReport b;
    b.band = band;
    b.n = sub.size();
    if (sub.size() >= 2) {
      b.metrics = compute_metrics(sub);
    } else {
      g.notes.push_back(to_string(band) + " band has fewer than two episodes; metrics omitted");
    }
    g.bands.push_back(std::move(b));
  }
  return g;
}

BacktestReport make_report(std::string strategy, std::string schedule, std::vector<EpisodeResult> episodes,
                           std::vector<std::string> errors) {
  BacktestReport r;
  r.strategy = std::move(strategy);
  r.schedule = std::move(schedule);
  r.episodes = std::move(episodes);
  r.errors = std::move(errors);
  r.metrics = compute_metrics(r.episodes);
  r.groups = grouping_report(r.episodes);
  return r;
}

json to_json(const MetricsReport& m) {
  return json{{"n", m.n},
              {"return_bps", m.return_bps},
              {"std_bps", m.std_bps},
              {"t_value", number_or_inf(m.t_value)},
              {"pnl_bps", m.pnl_bps},
              {"violation_rate", m.violation_rate},
              {"warnings", m.warnings}};
}

json to_json(const BacktestReport& r) {
  json eps = json::array();
  for (const auto& e : r.episodes) {
    eps.push_back({{"stock", e.stock_id},
                   {"day", e.day},
                   {"band", to_string(e.band)},
                   {"close_price", e.close_price},
                   {"excess_return_bps", e.excess_return_bps},
                   {"reward_bps", e.reward_bps},
                   {"submitted_total", e.submitted_total},
                   {"cancellation_violation", e.cancellation_violation},
                   {"clamped_prices", e.clamped_prices}});
  }
  return json{{"format", "halop-report"},
              {"version", 1},
              {"strategy", r.strategy},
              {"schedule", r.schedule},
              {"metrics", to_json(r.metrics)},
              {"bands", report_json(r, true).at("bands")},
              {"notes", r.groups.notes},
              {"errors", r.errors},
              {"episodes", eps}};
}

BacktestReport backtest_report_from_json(const json& j) {
  if (j.value("format", "") != "halop-report") throw std::invalid_argument("not a backtest report");
  std::vector<EpisodeResult> eps;
  for (const auto& e : j.at("episodes")) {
    EpisodeResult r;
    r.stock_id = e.at("stock").get<std::string>();
    r.day = e.at("day").get<std::string>();
    r.band = band_from_string(e.at("band").get<std::string>());
    r.close_price = e.at("close_price").get<double>();
    r.excess_return_bps = e.at("excess_return_bps").get<double>();
    r.reward_bps = e.at("reward_bps").get<double>();
    r.submitted_total = e.at("submitted_total").get<double>();
    r.cancellation_violation = e.at("cancellation_violation").get<bool>();
    r.clamped_prices = e.value("clamped_prices", 0);
    eps.push_back(std::move(r));
  }
  BacktestReport r = make_report(j.at("strategy").get<std::string>(), j.at("schedule").get<std::string>(),
                                 std::move(eps), j.value("errors", std::vector<std::string>{}));
  // Stored aggregates must agree with a recomputation from the episodes.
  const MetricsReport stored = metrics_from_json(j.at("metrics"));
  if (stored.n != r.metrics.n) throw std::invalid_argument("report metrics disagree with its episodes");
  return r;
}

json report_json(const BacktestReport& r, bool by_band) {
  json j{{"strategy", r.strategy}, {"schedule", r.schedule}, {"overall", to_json(r.metrics)}};
  if (by_band) {
    json bands = json::object();
    for (const auto& b : r.groups.bands) {
      bands[to_string(b.band)] = b.metrics ? to_json(*b.metrics) : json{{"n", b.n}};
    }
    j["bands"] = bands;
  }
  return j;
}

std::string report_csv(const BacktestReport& r, bool by_band) {
  std::ostringstream os;
  os << "scope,n,return_bps,std_bps,t_value,pnl_bps,violation_rate\n";
  auto row = [&](const std::string& scope, const MetricsReport& m) {
    os << scope << ',' << m.n << ',' << fmt(m.return_bps, 6) << ',' << fmt(m.std_bps, 6) << ','
       << fmt(m.t_value, 6) << ',' << fmt(m.pnl_bps, 6) << ',' << fmt(m.violation_rate, 6) << '\n';
  };
  row("all", r.metrics);
  if (by_band) {
    for (const auto& b : r.groups.bands) {
      if (b.metrics) row(to_string(b.band), *b.metrics);
    }
  }
  return os.str();
}

std::string report_markdown(const BacktestReport& r, bool by_band) {
  std::ostringstream os;
  os << "Strategy: " << r.strategy << ", schedule: " << r.schedule << "\n\n";
  os << "| scope | n | Return (bps) | Std (bps) | t-value | PnL (bps) |\n";
  os << "|---|---|---|---|---|---|\n";
  auto row = [&](const std::string& scope, const MetricsReport& m) {
    os << "| " << scope << " | " << m.n << " | " << fmt(m.return_bps, 2) << " | " << fmt(m.std_bps, 2) << " | "
       << fmt(m.t_value, 2) << " | " << fmt(m.pnl_bps, 2) << " |\n";
  };
  row("all", r.metrics);
  if (by_band) {
    for (const auto& b : r.groups.bands) {
      if (b.metrics) row(to_string(b.band), *b.metrics);
    }
    for (const auto& note : r.groups.notes) os << "\n_" << note << "_\n";
  }
  return os.str();
}

}  // namespace halop
