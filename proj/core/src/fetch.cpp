#include "fmmq/fetch.hpp"

#include "fmmq/exceptions.hpp"

#ifdef FMMQ_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace fmmq {

SeriesDownloader fred_downloader() {
  return [](const std::string& id) -> std::string {
#ifdef FMMQ_HAVE_OPENSSL
    httplib::Client client("https://fred.stlouisfed.org");
    client.set_follow_location(true);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    const auto res = client.Get("/graph/fredgraph.csv?id=" + id);
    if (!res) throw IoError("request for series " + id + " failed: " + httplib::to_string(res.error()), true);
    if (res->status != 200) {
      // 4xx means the id is wrong; retrying will not help.
      throw IoError("request for series " + id + " returned HTTP " + std::to_string(res->status), res->status >= 500);
    }
    return res->body;
#else
    throw IoError("built without TLS support; cannot download series " + id);
#endif
  };
}

Series parse_series_csv(const std::string& text, const std::string& id) {
  const CsvTable t = parse_csv(text);
  if (t.header.size() != 2) throw InputError("series " + id + ": expected two columns (date, value)");
  Series s;
  s.id = id;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != 2) throw InputError("series " + id + ": malformed line " + std::to_string(r + 2));
    const std::string& date = row[0];
    if (date.size() != 10 || date[4] != '-' || date[7] != '-') {
      throw InputError("series " + id + ": bad date '" + date + "' on line " + std::to_string(r + 2));
    }
    if (row[1] == "." || row[1].empty()) continue;
    double v = 0.0;
    const auto [end, ec] = std::from_chars(row[1].data(), row[1].data() + row[1].size(), v);
    if (ec != std::errc{} || end != row[1].data() + row[1].size()) {
      throw InputError("series " + id + ": bad value '" + row[1] + "' on line " + std::to_string(r + 2));
    }
    if (!s.dates.empty() && date <= s.dates.back()) throw InputError("series " + id + ": dates not increasing");
    s.dates.push_back(date);
    s.values.push_back(v);
  }
  if (s.dates.empty()) throw InputError("series " + id + " has no observations");
  return s;
}

std::vector<Series> fetch_series(const std::vector<std::string>& ids, const FetchOptions& options,
                                 const SeriesDownloader& download) {
  std::error_code ec;
  std::filesystem::create_directories(options.cache_dir, ec);
  if (ec) throw IoError("cannot create cache directory " + options.cache_dir.string() + ": " + ec.message());
  std::vector<Series> out;
  for (const auto& id : ids) {
    if (id.empty() || id.find_first_of("/\\?&=. ") != std::string::npos) throw ConfigError("invalid series id '" + id + "'");
    const auto path = options.cache_dir / (id + ".csv");
    std::string body;
    if (std::filesystem::exists(path) && !options.refresh) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot read cached series " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      body = ss.str();
    } else if (options.offline) {
      throw IoError("series " + id + " is not cached in " + options.cache_dir.string() + " and offline mode is set");
    } else {
      body = download(id);
      // Validate before caching so a bad payload never poisons the cache.
      parse_series_csv(body, id);
      write_file_atomic(path, body);
    }
    out.push_back(parse_series_csv(body, id));
  }
  return out;
}

Series percent_change_year_ago(const Series& s) {
  std::map<std::string, double> by_date;
  for (std::size_t i = 0; i < s.dates.size(); ++i) by_date[s.dates[i]] = s.values[i];
  Series out;
  out.id = s.id;
  for (std::size_t i = 0; i < s.dates.size(); ++i) {
    std::string prev = s.dates[i];
    const int year = std::stoi(prev.substr(0, 4)) - 1;
    prev.replace(0, 4, std::to_string(year));
    const auto it = by_date.find(prev);
    if (it == by_date.end()) continue;
    if (it->second == 0.0) throw InputError("series " + s.id + " is zero on " + prev + "; percent change undefined");
    out.dates.push_back(s.dates[i]);
    out.values.push_back(100.0 * (s.values[i] / it->second - 1.0));
  }
  return out;
}

CsvTable join_on_date(const std::vector<Series>& series, const std::vector<std::string>& columns) {
  if (series.size() != columns.size()) throw ConfigError("join needs one column name per series");
  CsvTable t;
  t.header.push_back("date");
  t.header.insert(t.header.end(), columns.begin(), columns.end());
  if (series.empty()) return t;
  std::vector<std::map<std::string, double>> maps;
  for (const auto& s : series) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < s.dates.size(); ++i) m[s.dates[i]] = s.values[i];
    maps.push_back(std::move(m));
  }
  for (const auto& [date, v0] : maps.front()) {
    std::vector<std::string> row{date, format_double(v0)};
    bool all = true;
    for (std::size_t k = 1; k < maps.size() && all; ++k) {
      const auto it = maps[k].find(date);
      if (it == maps[k].end()) {
        all = false;
      } else {
        row.push_back(format_double(it->second));
      }
    }
    if (all) t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace fmmq
