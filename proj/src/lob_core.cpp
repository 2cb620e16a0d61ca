#include "halop/lob_core.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace halop {

namespace {

void require_positive(double current_price, double tick_size) {
  if (!(current_price > 0.0) || !(tick_size > 0.0)) {
    throw std::invalid_argument("current price and tick size must be positive");
  }
}

// Relative tolerance for "is this decimal on the tick grid".
constexpr double kGridTolerance = 1e-6;

bool on_grid(double price, double tick_size, Ticks& out) {
  const double q = price / tick_size;
  const double r = std::round(q);
  out = static_cast<Ticks>(r);
  return std::abs(q - r) <= kGridTolerance * std::max(1.0, std::abs(r));
}

}  // namespace

LoadError::LoadError(std::string path, std::size_t row, const std::string& what)
    : std::runtime_error(path + (row ? ":" + std::to_string(row) : std::string{}) + ": " + what),
      path_(std::move(path)),
      row_(row) {}

PctAction pct_from_ticks(TickAction ticks, double current_price, double tick_size) {
  require_positive(current_price, tick_size);
  return PctAction{static_cast<double>(ticks.value) * tick_size / current_price};
}

TickAction ticks_from_pct(PctAction pct, double current_price, double tick_size) {
  require_positive(current_price, tick_size);
  // std::round rounds halfway cases away from zero.
  return TickAction{static_cast<std::int64_t>(std::round(pct.value * current_price / tick_size))};
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NonPositivePrice: return "non-positive-price";
    case ViolationKind::OffTick: return "off-tick";
    case ViolationKind::BidsNotDescending: return "bids-not-descending";
    case ViolationKind::AsksNotAscending: return "asks-not-ascending";
    case ViolationKind::CrossedBook: return "crossed-book";
    case ViolationKind::NegativeVolume: return "negative-volume";
  }
  return "unknown";
}

std::vector<Violation> validate_snapshot(const TickSnapshot& snap) {
  std::vector<Violation> out;
  auto positive = [&](Ticks p, const char* what) {
    if (p <= 0) out.push_back({ViolationKind::NonPositivePrice, what});
  };
  positive(snap.last, "last");
  for (std::size_t i = 0; i < kBookDepth; ++i) {
    positive(snap.bid_prices[i], "bid");
    positive(snap.ask_prices[i], "ask");
    if (snap.bid_volumes[i] < 0 || snap.ask_volumes[i] < 0) {
      out.push_back({ViolationKind::NegativeVolume, "level " + std::to_string(i + 1)});
    }
  }
  for (std::size_t i = 1; i < kBookDepth; ++i) {
    if (snap.bid_prices[i] >= snap.bid_prices[i - 1]) {
      out.push_back({ViolationKind::BidsNotDescending, "bid level " + std::to_string(i + 1)});
    }
    if (snap.ask_prices[i] <= snap.ask_prices[i - 1]) {
      out.push_back({ViolationKind::AsksNotAscending, "ask level " + std::to_string(i + 1)});
    }
  }
  if (snap.ask_prices[0] <= snap.bid_prices[0]) {
    out.push_back({ViolationKind::CrossedBook, "ask1 <= bid1"});
  }
  return out;
}

std::vector<Violation> validate_snapshot(const QuoteRow& row, double tick_size) {
  std::vector<Violation> out;
  if (!(tick_size > 0.0)) {
    out.push_back({ViolationKind::NonPositivePrice, "tick size"});
    return out;
  }
  TickSnapshot snap;
  snap.time_offset = row.time_offset;
  auto convert = [&](double price, Ticks& dst, const std::string& what) {
    if (!on_grid(price, tick_size, dst)) {
      std::ostringstream os;
      os << what << " " << price << " not a multiple of " << tick_size;
      out.push_back({ViolationKind::OffTick, os.str()});
    }
  };
  convert(row.last, snap.last, "last");
  for (std::size_t i = 0; i < kBookDepth; ++i) {
    convert(row.bid_prices[i], snap.bid_prices[i], "bid" + std::to_string(i + 1));
    convert(row.ask_prices[i], snap.ask_prices[i], "ask" + std::to_string(i + 1));
  }
  snap.bid_volumes = row.bid_volumes;
  snap.ask_volumes = row.ask_volumes;
  auto rest = validate_snapshot(snap);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

TickSnapshot to_tick_snapshot(const QuoteRow& row, double tick_size) {
  TickSnapshot snap;
  snap.time_offset = row.time_offset;
  auto convert = [&](double price, Ticks& dst) {
    if (!on_grid(price, tick_size, dst)) {
      throw std::invalid_argument("price " + std::to_string(price) + " is off the tick grid");
    }
  };
  convert(row.last, snap.last);
  for (std::size_t i = 0; i < kBookDepth; ++i) {
    convert(row.bid_prices[i], snap.bid_prices[i]);
    convert(row.ask_prices[i], snap.ask_prices[i]);
  }
  snap.bid_volumes = row.bid_volumes;
  snap.ask_volumes = row.ask_volumes;
  return snap;
}

QuoteRow to_quote_row(const TickSnapshot& snap, double tick_size) {
  QuoteRow row;
  row.time_offset = snap.time_offset;
  row.last = static_cast<double>(snap.last) * tick_size;
  for (std::size_t i = 0; i < kBookDepth; ++i) {
    row.bid_prices[i] = static_cast<double>(snap.bid_prices[i]) * tick_size;
    row.ask_prices[i] = static_cast<double>(snap.ask_prices[i]) * tick_size;
  }
  row.bid_volumes = snap.bid_volumes;
  row.ask_volumes = snap.ask_volumes;
  return row;
}

void EpisodeSpec::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(tick_size > 0.0)) throw std::invalid_argument("tick size must be positive");
  if (direction != Direction::Buy && direction != Direction::Sell) {
    throw std::invalid_argument("direction must be +1 or -1");
  }
  if (!(order_cap > 0.0 && order_cap <= 1.0)) throw std::invalid_argument("order cap must be in (0, 1]");
  if (!(step_seconds > 0.0)) throw std::invalid_argument("step seconds must be positive");
  if (latency_seconds < 0.0) throw std::invalid_argument("latency must be non-negative");
  if (!(inventory_shares > 0.0)) throw std::invalid_argument("inventory must be positive");
}

double EpisodeData::close_price() const {
  if (snapshots.empty()) throw std::logic_error("episode has no snapshots");
  return to_price(snapshots.back().last);
}

PriceBand price_band(double price) {
  if (price < 10.0) return PriceBand::Low;
  if (price > 50.0) return PriceBand::High;
  return PriceBand::Medium;
}

std::string to_string(PriceBand band) {
  switch (band) {
    case PriceBand::Low: return "low";
    case PriceBand::Medium: return "medium";
    case PriceBand::High: return "high";
  }
  return "unknown";
}

void VolumeSchedule::validate() const {
  if (targets.empty()) throw std::invalid_argument("empty volume schedule");
  for (double v : targets) {
    if (!(v >= 0.0)) throw std::invalid_argument("negative schedule entry");
  }
  const double total = std::accumulate(targets.begin(), targets.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("schedule sums to " + std::to_string(total) + ", not 1");
  }
}

}  // namespace halop
