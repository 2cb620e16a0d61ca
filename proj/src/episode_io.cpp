#include "halop/episode_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace halop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kColumns = 2 + 4 * kBookDepth;

std::vector<std::string> header_columns() {
  std::vector<std::string> cols{"time_offset_s", "last"};
  for (const char* prefix : {"bid", "bidv", "ask", "askv"}) {
    for (std::size_t i = 1; i <= kBookDepth; ++i) cols.push_back(prefix + std::to_string(i));
  }
  return cols;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

int tick_decimals(double tick_size) {
  for (int d = 0; d <= 9; ++d) {
    const double scaled = tick_size * std::pow(10.0, d);
    if (std::abs(scaled - std::round(scaled)) < 1e-9 * std::max(1.0, scaled)) return d;
  }
  return 10;
}

std::string format_price(Ticks ticks, double tick_size, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, static_cast<double>(ticks) * tick_size);
  return buf;
}

std::string format_time(double t) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), t);
  return std::string(buf, ptr);
}

json spec_to_json(const EpisodeSpec& s) {
  return json{{"horizon", s.horizon},
              {"step_seconds", s.step_seconds},
              {"direction", sign(s.direction)},
              {"latency_seconds", s.latency_seconds},
              {"order_cap", s.order_cap},
              {"start_offset_s", s.start_offset_s}};
}

EpisodeSpec spec_from_json(const json& j) {
  EpisodeSpec s;
  s.horizon = j.value("horizon", s.horizon);
  s.step_seconds = j.value("step_seconds", s.step_seconds);
  s.direction = j.value("direction", 1) >= 0 ? Direction::Buy : Direction::Sell;
  s.latency_seconds = j.value("latency_seconds", s.latency_seconds);
  s.order_cap = j.value("order_cap", s.order_cap);
  s.start_offset_s = j.value("start_offset_s", s.start_offset_s);
  return s;
}

}  // namespace

std::string episode_csv_header() {
  std::string out;
  for (const auto& c : header_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::pair<std::string, std::string> parse_episode_filename(const fs::path& path) {
  const std::string stem = path.stem().string();
  const auto us = stem.rfind('_');
  if (path.extension() != ".csv" || us == std::string::npos || us == 0) {
    throw LoadError(path.string(), 0, "file name must be {stock_id}_{YYYYMMDD}.csv");
  }
  std::string day = stem.substr(us + 1);
  if (day.size() != 8 || day.find_first_not_of("0123456789") != std::string::npos) {
    throw LoadError(path.string(), 0, "trading day must be YYYYMMDD");
  }
  return {stem.substr(0, us), day};
}

std::string episode_filename(const std::string& stock_id, const std::string& trading_day) {
  return stock_id + "_" + trading_day + ".csv";
}

EpisodeData load_episode_csv(const fs::path& path, const EpisodeSpec& base) {
  const std::string where = path.string();
  std::ifstream in(path);
  if (!in) throw LoadError(where, 0, "cannot open file");

  EpisodeData ep;
  ep.spec = base;
  std::tie(ep.spec.stock_id, ep.spec.trading_day) = parse_episode_filename(path);
  const double tick = ep.spec.tick_size;
  if (!(tick > 0.0)) throw LoadError(where, 0, "tick size must be positive");

  std::string line;
  if (!std::getline(in, line)) throw LoadError(where, 0, "missing header");
  const auto expected = header_columns();
  const auto got = split(trim(line), ',');
  // Map column name -> position so that column order is not significant.
  std::vector<std::size_t> pos(kColumns);
  for (std::size_t c = 0; c < kColumns; ++c) {
    std::size_t found = got.size();
    for (std::size_t g = 0; g < got.size(); ++g) {
      if (trim(got[g]) == expected[c]) found = g;
    }
    if (found == got.size()) throw LoadError(where, 0, "missing column '" + expected[c] + "'");
    pos[c] = found;
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(trim(line), ',');
    if (cells.size() != got.size()) {
      throw LoadError(where, row, "expected " + std::to_string(got.size()) + " fields");
    }
    QuoteRow q;
    auto num = [&](std::size_t col, auto& out) {
      if (!parse_number(cells[pos[col]], out)) {
        throw LoadError(where, row, "bad value in column '" + expected[col] + "'");
      }
    };
    num(0, q.time_offset);
    num(1, q.last);
    for (std::size_t i = 0; i < kBookDepth; ++i) {
      num(2 + i, q.bid_prices[i]);
      num(2 + kBookDepth + i, q.bid_volumes[i]);
      num(2 + 2 * kBookDepth + i, q.ask_prices[i]);
      num(2 + 3 * kBookDepth + i, q.ask_volumes[i]);
    }
    const auto violations = validate_snapshot(q, tick);
    if (!violations.empty()) {
      throw LoadError(where, row, to_string(violations.front().kind) + ": " + violations.front().detail);
    }
    if (!ep.snapshots.empty() && !(q.time_offset > ep.snapshots.back().time_offset)) {
      throw LoadError(where, row, "timestamps not strictly increasing");
    }
    ep.snapshots.push_back(to_tick_snapshot(q, tick));
  }
  if (ep.snapshots.empty()) throw LoadError(where, 0, "no data rows");
  return ep;
}

void write_episode_csv(const fs::path& path, const EpisodeData& episode) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const double tick = episode.spec.tick_size;
  const int dec = tick_decimals(tick);
  out << episode_csv_header() << '\n';
  for (const auto& s : episode.snapshots) {
    out << format_time(s.time_offset) << ',' << format_price(s.last, tick, dec);
    for (auto p : s.bid_prices) out << ',' << format_price(p, tick, dec);
    for (auto v : s.bid_volumes) out << ',' << v;
    for (auto p : s.ask_prices) out << ',' << format_price(p, tick, dec);
    for (auto v : s.ask_volumes) out << ',' << v;
    out << '\n';
  }
}

const std::vector<EpisodeData>& Dataset::day(const std::string& d) const {
  auto it = by_day.find(d);
  if (it == by_day.end()) throw std::out_of_range("no episodes for day " + d);
  return it->second;
}

EpisodeSpec spec_for(const DatasetManifest& manifest, const StockInfo& stock, const std::string& day) {
  EpisodeSpec s = manifest.episode;
  s.stock_id = stock.id;
  s.trading_day = day;
  s.tick_size = stock.tick_size;
  s.inventory_shares = stock.inventory_shares;
  return s;
}

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
  json stocks = json::array();
  for (const auto& s : manifest.stocks) {
    stocks.push_back({{"id", s.id}, {"tick_size", s.tick_size}, {"inventory_shares", s.inventory_shares}});
  }
  json j{{"format", "halop-dataset"},
         {"version", 1},
         {"episode", spec_to_json(manifest.episode)},
         {"stocks", stocks},
         {"days", manifest.days}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), 0, "cannot open manifest");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string(), 0, e.what());
  }
  if (j.value("format", "") != "halop-dataset") throw LoadError(path.string(), 0, "not a dataset manifest");
  DatasetManifest m;
  m.episode = spec_from_json(j.at("episode"));
  for (const auto& s : j.at("stocks")) {
    m.stocks.push_back({s.at("id").get<std::string>(), s.at("tick_size").get<double>(),
                        s.at("inventory_shares").get<double>()});
  }
  m.days = j.at("days").get<std::vector<std::string>>();
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  for (const auto& day : ds.manifest.days) {
    auto& eps = ds.by_day[day];
    for (const auto& stock : ds.manifest.stocks) {
      const auto path = dir / episode_filename(stock.id, day);
      if (!fs::exists(path)) continue;
      eps.push_back(load_episode_csv(path, spec_for(ds.manifest, stock, day)));
    }
  }
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  write_manifest(dir, dataset.manifest);
  for (const auto& [day, eps] : dataset.by_day) {
    for (const auto& ep : eps) write_episode_csv(dir / episode_filename(ep.spec.stock_id, day), ep);
  }
}

}  // namespace halop
