#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "halop/lob_core.hpp"

namespace halop {

// Header of the episode CSV:
//   time_offset_s,last,bid1..bid5,bidv1..bidv5,ask1..ask5,askv1..askv5
std::string episode_csv_header();

// Parses `{stock_id}_{YYYYMMDD}.csv`. Throws LoadError on a malformed name.
std::pair<std::string, std::string> parse_episode_filename(const std::filesystem::path& path);
std::string episode_filename(const std::string& stock_id, const std::string& trading_day);

// Loads one episode file. Everything except the snapshot stream comes from
// `base`; stock id and day are taken from the file name. Throws LoadError
// naming the offending row on schema, ordering or validation failures.
EpisodeData load_episode_csv(const std::filesystem::path& path, const EpisodeSpec& base);

void write_episode_csv(const std::filesystem::path& path, const EpisodeData& episode);

struct StockInfo {
  std::string id;
  double tick_size = 0.01;
  double inventory_shares = 10000.0;
};

struct DatasetManifest {
  EpisodeSpec episode;  // shared mission parameters
  std::vector<StockInfo> stocks;
  std::vector<std::string> days;  // ascending YYYYMMDD
};

// A directory of episode CSVs plus manifest.json.
struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, std::vector<EpisodeData>> by_day;

  const std::vector<EpisodeData>& day(const std::string& d) const;
};

EpisodeSpec spec_for(const DatasetManifest& manifest, const StockInfo& stock, const std::string& day);

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

// Loads every (stock, day) file listed by the manifest. Missing files are
// skipped; malformed ones throw.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace halop
