#include "fmmq/exceptions.hpp"
#include "fmmq/fetch.hpp"
#include "test_util.hpp"

#include <fstream>

using namespace fmmq;

namespace {

std::string monthly_csv(const std::string& id, int first_year, int years, double start, double step) {
  std::string s = "observation_date," + id + "\n";
  double v = start;
  for (int y = first_year; y < first_year + years; ++y) {
    for (int m = 1; m <= 12; ++m) {
      char date[32];
      std::snprintf(date, sizeof date, "%04d-%02d-01", y, m);
      s += std::string(date) + "," + format_double(v) + "\n";
      v += step;
    }
  }
  return s;
}

}  // namespace

TEST(SeriesCsv, ParsesAndDropsMissing) {
  const Series s = parse_series_csv("DATE,X\n2000-01-01,1.5\n2000-02-01,.\n2000-03-01,2\n", "X");
  EXPECT_EQ(s.dates, (std::vector<std::string>{"2000-01-01", "2000-03-01"}));
  EXPECT_EQ(s.values, (std::vector<double>{1.5, 2.0}));
  EXPECT_THROW(parse_series_csv("DATE,X,Y\n2000-01-01,1,2\n", "X"), InputError);
  EXPECT_THROW(parse_series_csv("DATE,X\n2000/01/01,1\n", "X"), InputError);
  EXPECT_THROW(parse_series_csv("DATE,X\n2000-01-01,abc\n", "X"), InputError);
  EXPECT_THROW(parse_series_csv("DATE,X\n2000-02-01,1\n2000-01-01,2\n", "X"), InputError);
  EXPECT_THROW(parse_series_csv("DATE,X\n2000-01-01,.\n", "X"), InputError);
}

TEST(PercentChange, ConstantSeriesIsZero) {
  const Series s = parse_series_csv(monthly_csv("C", 2000, 3, 4.0, 0.0), "C");
  const Series pc = percent_change_year_ago(s);
  ASSERT_EQ(pc.dates.size(), 24u);
  EXPECT_EQ(pc.dates.front(), "2001-01-01");
  for (double v : pc.values) EXPECT_EQ(v, 0.0);
}

TEST(PercentChange, MatchesHandComputation) {
  const Series s = parse_series_csv(monthly_csv("L", 2000, 2, 100.0, 1.0), "L");
  const Series pc = percent_change_year_ago(s);
  ASSERT_EQ(pc.values.size(), 12u);
  // Jan 2001 is 112, Jan 2000 is 100.
  EXPECT_NEAR(pc.values[0], 12.0, 1e-12);
  EXPECT_NEAR(pc.values[11], 100.0 * (123.0 / 111.0 - 1.0), 1e-12);
  Series zero = s;
  zero.values[0] = 0.0;
  EXPECT_THROW(percent_change_year_ago(zero), InputError);
}

TEST(JoinOnDate, InnerJoinKeepsCommonDates) {
  const Series a = parse_series_csv(monthly_csv("A", 2000, 3, 1.0, 1.0), "A");  // 2000..2002
  const Series b = parse_series_csv(monthly_csv("B", 2001, 3, 0.5, 0.0), "B");  // 2001..2003
  const CsvTable t = join_on_date({a, b}, {"a", "b"});
  EXPECT_EQ(t.header, (std::vector<std::string>{"date", "a", "b"}));
  ASSERT_EQ(t.rows.size(), 24u);
  EXPECT_EQ(t.rows.front()[0], "2001-01-01");
  EXPECT_EQ(t.rows.front()[1], "13");
  EXPECT_EQ(t.rows.back()[0], "2002-12-01");
  EXPECT_EQ(t.rows.back()[2], "0.5");
  EXPECT_THROW(join_on_date({a}, {"a", "b"}), ConfigError);
}

TEST(FetchSeries, DownloadsOnceThenUsesCache) {
  test::TempDir dir;
  int calls = 0;
  const SeriesDownloader fake = [&calls](const std::string& id) {
    ++calls;
    return monthly_csv(id, 2000, 2, 1.0, 1.0);
  };
  FetchOptions opt;
  opt.cache_dir = dir / "cache";
  const auto first = fetch_series({"AAA", "BBB"}, opt, fake);
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "cache" / "AAA.csv"));
  const auto second = fetch_series({"AAA", "BBB"}, opt, fake);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(second[1].values, first[1].values);
  opt.refresh = true;
  fetch_series({"AAA"}, opt, fake);
  EXPECT_EQ(calls, 3);
}

TEST(FetchSeries, OfflineUsesCacheOnly) {
  test::TempDir dir;
  std::filesystem::create_directories(dir / "cache");
  {
    std::ofstream out(dir / "cache" / "CACHED.csv");
    out << monthly_csv("CACHED", 2010, 1, 2.0, 0.5);
  }
  const SeriesDownloader never = [](const std::string&) -> std::string {
    ADD_FAILURE() << "network touched in offline mode";
    return {};
  };
  FetchOptions opt;
  opt.cache_dir = dir / "cache";
  opt.offline = true;
  const auto s = fetch_series({"CACHED"}, opt, never);
  EXPECT_EQ(s[0].values.size(), 12u);
  EXPECT_THROW(fetch_series({"MISSING"}, opt, never), IoError);
}

TEST(FetchSeries, BadPayloadIsNotCached) {
  test::TempDir dir;
  FetchOptions opt;
  opt.cache_dir = dir.path();
  const SeriesDownloader junk = [](const std::string&) { return std::string("<html>oops</html>\n"); };
  EXPECT_THROW(fetch_series({"JUNK"}, opt, junk), InputError);
  EXPECT_FALSE(std::filesystem::exists(dir / "JUNK.csv"));
  const SeriesDownloader down = [](const std::string& id) -> std::string { throw IoError("no route to " + id, true); };
  try {
    fetch_series({"DOWN"}, opt, down);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_TRUE(e.retriable());
  }
  EXPECT_THROW(fetch_series({"../etc"}, opt, junk), ConfigError);
}
