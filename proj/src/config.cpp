#include "halop/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "halop/rng.hpp"

namespace halop {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown " + where + " key '" + k + "'");
  }
}

std::chrono::year_month_day parse_day(const std::string& s) {
  if (s.size() != 8 || s.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("day must be YYYYMMDD, got '" + s + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(s.substr(0, 4))},
                                        std::chrono::month{static_cast<unsigned>(std::stoi(s.substr(4, 2)))},
                                        std::chrono::day{static_cast<unsigned>(std::stoi(s.substr(6, 2)))}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar day '" + s + "'");
  return ymd;
}

std::string format_day(const std::chrono::year_month_day& ymd) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace

void DataGenConfig::validate() const {
  if (stocks < 1 || days < 1) throw std::invalid_argument("stocks and days must be >= 1");
  if (!prices.empty() && static_cast<int>(prices.size()) != stocks) {
    throw std::invalid_argument("prices must list one base price per stock");
  }
  for (double p : prices) {
    if (!(p > 0.0)) throw std::invalid_argument("base prices must be positive");
  }
  if (!(min_price > 0.0) || max_price < min_price) throw std::invalid_argument("bad price range");
  if (daily_drift < 0.0) throw std::invalid_argument("daily drift must be non-negative");
  (void)parse_day(first_day);
  synth.validate();
}

json to_json(const DataGenConfig& c) {
  const auto& s = c.synth;
  const auto& e = s.episode;
  return json{{"stocks", c.stocks},
              {"days", c.days},
              {"first_day", c.first_day},
              {"prices", c.prices},
              {"min_price", c.min_price},
              {"max_price", c.max_price},
              {"daily_drift", c.daily_drift},
              {"mission",
               {{"tick_size", e.tick_size},
                {"horizon", e.horizon},
                {"step_seconds", e.step_seconds},
                {"direction", e.direction == Direction::Buy ? "buy" : "sell"},
                {"latency_seconds", e.latency_seconds},
                {"order_cap", e.order_cap},
                {"inventory_shares", e.inventory_shares}}},
              {"market",
               {{"volatility", s.volatility},
                {"mean_reversion", s.mean_reversion},
                {"spread_ticks", s.spread_ticks},
                {"spread_widen_prob", s.spread_widen_prob},
                {"depth_shares", s.depth_shares},
                {"depth_noise", s.depth_noise},
                {"intraday_u_shape", s.intraday_u_shape},
                {"snapshot_interval", s.snapshot_interval},
                {"history_snapshots", s.history_snapshots}}}};
}

DataGenConfig data_config_from_json(const json& j) {
  check_keys(j, {"stocks", "days", "first_day", "prices", "min_price", "max_price", "daily_drift", "mission", "market"},
             "data config");
  DataGenConfig c;
  c.stocks = j.value("stocks", c.stocks);
  c.days = j.value("days", c.days);
  c.first_day = j.value("first_day", c.first_day);
  c.prices = j.value("prices", c.prices);
  c.min_price = j.value("min_price", c.min_price);
  c.max_price = j.value("max_price", c.max_price);
  c.daily_drift = j.value("daily_drift", c.daily_drift);
  auto& e = c.synth.episode;
  if (j.contains("mission")) {
    const auto& m = j.at("mission");
    check_keys(m,
               {"tick_size", "horizon", "step_seconds", "direction", "latency_seconds", "order_cap",
                "inventory_shares"},
               "mission");
    e.tick_size = m.value("tick_size", e.tick_size);
    e.horizon = m.value("horizon", e.horizon);
    e.step_seconds = m.value("step_seconds", e.step_seconds);
    const std::string dir = m.value("direction", std::string("buy"));
    if (dir != "buy" && dir != "sell") throw std::invalid_argument("direction must be buy or sell");
    e.direction = dir == "buy" ? Direction::Buy : Direction::Sell;
    e.latency_seconds = m.value("latency_seconds", e.latency_seconds);
    e.order_cap = m.value("order_cap", e.order_cap);
    e.inventory_shares = m.value("inventory_shares", e.inventory_shares);
  }
  auto& s = c.synth;
  if (j.contains("market")) {
    const auto& m = j.at("market");
    check_keys(m,
               {"volatility", "mean_reversion", "spread_ticks", "spread_widen_prob", "depth_shares", "depth_noise",
                "intraday_u_shape", "snapshot_interval", "history_snapshots"},
               "market");
    s.volatility = m.value("volatility", s.volatility);
    s.mean_reversion = m.value("mean_reversion", s.mean_reversion);
    s.spread_ticks = m.value("spread_ticks", s.spread_ticks);
    s.spread_widen_prob = m.value("spread_widen_prob", s.spread_widen_prob);
    s.depth_shares = m.value("depth_shares", s.depth_shares);
    s.depth_noise = m.value("depth_noise", s.depth_noise);
    s.intraday_u_shape = m.value("intraday_u_shape", s.intraday_u_shape);
    s.snapshot_interval = m.value("snapshot_interval", s.snapshot_interval);
    s.history_snapshots = m.value("history_snapshots", s.history_snapshots);
  }
  c.validate();
  return c;
}

std::vector<std::string> weekday_calendar(const std::string& first, int count) {
  using namespace std::chrono;
  std::vector<std::string> out;
  sys_days d{parse_day(first)};
  while (static_cast<int>(out.size()) < count) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) out.push_back(format_day(year_month_day{d}));
    d += days{1};
  }
  return out;
}

Dataset generate_dataset(const DataGenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds;
  auto& man = ds.manifest;
  man.episode = cfg.synth.episode;
  man.episode.start_offset_s = cfg.synth.history_snapshots * cfg.synth.snapshot_interval;
  man.days = weekday_calendar(cfg.first_day, cfg.days);
  const double tick = cfg.synth.episode.tick_size;

  Rng price_rng(mix_seed(seed, 0x5eed));
  std::vector<double> bases;
  for (int i = 0; i < cfg.stocks; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "S%03d", i);
    man.stocks.push_back({id, tick, cfg.synth.episode.inventory_shares});
    const double u = price_rng.uniform();
    const double base = cfg.prices.empty()
                            ? std::exp(std::log(cfg.min_price) + u * (std::log(cfg.max_price) - std::log(cfg.min_price)))
                            : cfg.prices[static_cast<std::size_t>(i)];
    bases.push_back(base);
  }

  for (int i = 0; i < cfg.stocks; ++i) {
    Rng drift_rng(mix_seed(seed, 0x10000 + static_cast<std::uint64_t>(i)));
    double base = bases[static_cast<std::size_t>(i)];
    for (int d = 0; d < cfg.days; ++d) {
      if (d > 0) base *= std::exp(cfg.daily_drift * drift_rng.normal());
      SynthParams p = cfg.synth;
      p.base_price = std::max(std::round(base / tick), 6.0) * tick;
      p.episode.stock_id = man.stocks[static_cast<std::size_t>(i)].id;
      p.episode.trading_day = man.days[static_cast<std::size_t>(d)];
      const std::uint64_t s = mix_seed(seed, (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(d));
      ds.by_day[p.episode.trading_day].push_back(generate_synthetic_day(p, s));
    }
  }
  return ds;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace halop
