#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace halop {

inline constexpr std::size_t kBookDepth = 5;

// Prices are integer counts of the episode's tick size. Currency values only
// appear at I/O boundaries.
using Ticks = std::int64_t;
using Shares = std::int64_t;

enum class Direction : int { Buy = 1, Sell = -1 };

inline int sign(Direction d) { return static_cast<int>(d); }

class LoadError : public std::runtime_error {
public:
  LoadError(std::string path, std::size_t row, const std::string& what);

  const std::string& path() const noexcept { return path_; }
  // 1-based data row (header is row 0); 0 when the error is not row-specific.
  std::size_t row() const noexcept { return row_; }

private:
  std::string path_;
  std::size_t row_;
};

// Signed limit-price offset from the current price, in ticks.
struct TickAction {
  std::int64_t value = 0;
  friend bool operator==(TickAction, TickAction) = default;
};

// Signed limit-price offset as a fraction of the current price (0.001 = 0.1%).
struct PctAction {
  double value = 0.0;
};

PctAction pct_from_ticks(TickAction ticks, double current_price, double tick_size);

// Nearest integer, ties away from zero.
TickAction ticks_from_pct(PctAction pct, double current_price, double tick_size);

struct TickSnapshot {
  double time_offset = 0.0;  // seconds from episode start
  Ticks last = 0;
  std::array<Ticks, kBookDepth> bid_prices{};
  std::array<Ticks, kBookDepth> ask_prices{};
  std::array<Shares, kBookDepth> bid_volumes{};
  std::array<Shares, kBookDepth> ask_volumes{};

  // Twice the midprice, so it stays on the integer grid.
  Ticks mid2() const noexcept { return bid_prices[0] + ask_prices[0]; }

  friend bool operator==(const TickSnapshot&, const TickSnapshot&) = default;
};

// Currency-level rendition of a snapshot as it appears in a file.
struct QuoteRow {
  double time_offset = 0.0;
  double last = 0.0;
  std::array<double, kBookDepth> bid_prices{};
  std::array<double, kBookDepth> ask_prices{};
  std::array<Shares, kBookDepth> bid_volumes{};
  std::array<Shares, kBookDepth> ask_volumes{};
};

enum class ViolationKind {
  NonPositivePrice,
  OffTick,
  BidsNotDescending,
  AsksNotAscending,
  CrossedBook,
  NegativeVolume,
};

struct Violation {
  ViolationKind kind;
  std::string detail;
};

std::string to_string(ViolationKind kind);

std::vector<Violation> validate_snapshot(const QuoteRow& row, double tick_size);
std::vector<Violation> validate_snapshot(const TickSnapshot& snap);

// Throws std::invalid_argument when a price is off the tick grid.
TickSnapshot to_tick_snapshot(const QuoteRow& row, double tick_size);
QuoteRow to_quote_row(const TickSnapshot& snap, double tick_size);

struct EpisodeSpec {
  std::string stock_id;
  std::string trading_day;  // YYYYMMDD
  double tick_size = 0.01;
  int horizon = 90;
  double step_seconds = 120.0;
  Direction direction = Direction::Buy;
  double latency_seconds = 3.0;
  double order_cap = 0.1;
  // Parent order size; volumes elsewhere are fractions of this.
  double inventory_shares = 10000.0;
  // Mission start inside the snapshot stream; earlier rows are history.
  double start_offset_s = 0.0;

  void validate() const;
  double mission_end() const { return start_offset_s + horizon * step_seconds; }
};

struct EpisodeData {
  EpisodeSpec spec;
  std::vector<TickSnapshot> snapshots;

  double to_price(Ticks t) const { return static_cast<double>(t) * spec.tick_size; }
  // Last price at the end of the stream.
  double close_price() const;
};

enum class PriceBand { Low, Medium, High };

// Low is strictly below 10.00, high strictly above 50.00.
PriceBand price_band(double price);
std::string to_string(PriceBand band);

struct VolumeSchedule {
  std::vector<double> targets;

  std::size_t size() const noexcept { return targets.size(); }
  double operator[](std::size_t t) const { return targets[t]; }
  // Throws std::invalid_argument on negative entries or a sum off 1 by > 1e-12.
  void validate() const;
};

enum class OrderKind { Limit, Market };

struct Order {
  int step = 0;  // 0-based
  OrderKind kind = OrderKind::Limit;
  Ticks limit_price = 0;
  double volume = 0.0;
};

struct Fill {
  double executed = 0.0;
  double avg_price = 0.0;  // currency; meaningless when executed == 0
  double cancelled = 0.0;
};

}  // namespace halop
