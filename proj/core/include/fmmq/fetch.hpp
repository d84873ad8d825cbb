#pragma once

#include "fmmq/dataset.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fmmq {

/// Dated observations of one series, in date order. Dates are YYYY-MM-DD.
struct Series {
  std::string id;
  std::vector<std::string> dates;
  std::vector<double> values;
};

/// Returns the CSV body for a series id. Throws IoError(retriable) on transport failure.
using SeriesDownloader = std::function<std::string(const std::string& id)>;

/// HTTPS GET of the FRED graph CSV endpoint (no API key).
SeriesDownloader fred_downloader();

/// Parse a two-column date,value CSV. Missing values written as "." are dropped.
/// Throws InputError on a malformed payload.
Series parse_series_csv(const std::string& text, const std::string& id);

struct FetchOptions {
  std::filesystem::path cache_dir = "fred_cache";
  /// Use only the cache; a missing entry is an IoError.
  bool offline = false;
  /// Download again even when a cached copy exists.
  bool refresh = false;
};

/// Fetch each series into cache_dir/<id>.csv (atomically) and return the parsed series.
/// Cached files are used without touching the network unless `refresh` is set.
std::vector<Series> fetch_series(const std::vector<std::string>& ids, const FetchOptions& options,
                                 const SeriesDownloader& download = fred_downloader());

/// 100 * (v_t / v_{t - 12 months} - 1), keeping dates where the year-earlier value exists.
Series percent_change_year_ago(const Series& s);

/// Inner join on date; the table header is "date" followed by `columns`.
CsvTable join_on_date(const std::vector<Series>& series, const std::vector<std::string>& columns);

}  // namespace fmmq
