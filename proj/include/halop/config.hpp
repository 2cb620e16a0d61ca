#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "halop/episode_io.hpp"
#include "halop/synthetic.hpp"
#include "json.hpp"

namespace halop {

// Synthetic universe for `halop generate-data`. Stock base prices are drawn
// log-uniformly from [min_price, max_price] unless `prices` lists them.
struct DataGenConfig {
  DataGenConfig() { synth.history_snapshots = 16; }

  int stocks = 20;
  int days = 70;
  std::string first_day = "20200102";
  std::vector<double> prices;
  double min_price = 3.0;
  double max_price = 80.0;
  double daily_drift = 0.02;  // log-sd of the day-to-day base price move
  SynthParams synth;          // per-day dynamics; episode fields are the mission

  void validate() const;
};

nlohmann::json to_json(const DataGenConfig& c);
// Throws std::invalid_argument on unknown keys or invalid values.
DataGenConfig data_config_from_json(const nlohmann::json& j);

// Weekdays starting at `first` (YYYYMMDD), inclusive.
std::vector<std::string> weekday_calendar(const std::string& first, int count);

Dataset generate_dataset(const DataGenConfig& cfg, std::uint64_t seed);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace halop
