#include "fmmq/dataset.hpp"

#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace fmmq {

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  out.response = response;
  out.factor_names = factor_names;
  out.provenance = provenance;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r < 0 || r >= size()) throw ConfigError("row index out of range");
    out.y[static_cast<Eigen::Index>(i)] = y[r];
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
  }
  return out;
}

void Dataset::validate() const {
  if (X.rows() != y.size()) throw InputError("factor rows and responses differ in length");
  if (static_cast<int>(factor_names.size()) != X.cols()) throw InputError("factor names do not match columns");
  std::set<std::string> names{response};
  for (const auto& n : factor_names) {
    if (!names.insert(n).second) throw InputError("duplicate column name '" + n + "'");
  }
  for (Eigen::Index n = 0; n < size(); ++n) {
    if (!std::isfinite(y[n])) throw InputError("row " + std::to_string(n + 1) + ": response is not finite");
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      if (!std::isfinite(X(n, k))) {
        throw InputError("row " + std::to_string(n + 1) + ": factor '" + factor_names[static_cast<std::size_t>(k)] +
                         "' is not finite");
      }
    }
  }
}

double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0,1]");
  std::vector<double> z(values.begin(), values.end());
  std::sort(z.begin(), z.end());
  const double h = (static_cast<double>(z.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, z.size() - 1);
  return z[lo] + (h - static_cast<double>(lo)) * (z[hi] - z[lo]);
}

// CSV -------------------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A bare empty line is skipped rather than read as one empty field.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started && !field.empty()) {
          throw InputError("CSV line " + std::to_string(line) + ": quote inside an unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',': end_field(); break;
      case '\r': break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw InputError("CSV: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();

  CsvTable table;
  if (records.empty()) throw InputError("CSV input is empty");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw InputError("CSV record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                       " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return parse_csv(buf.str());
}

namespace {

std::string quote_field(const std::string& f) {
  if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void append_record(std::string& out, const std::vector<std::string>& rec) {
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (i) out.push_back(',');
    out += quote_field(rec[i]);
  }
  out.push_back('\n');
}

std::optional<double> parse_number(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

}  // namespace

std::string format_csv(const CsvTable& table) {
  std::string out;
  append_record(out, table.header);
  for (const auto& r : table.rows) append_record(out, r);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  std::random_device rd;
  const fs::path tmp = dir / (path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_file_atomic(path, format_csv(table));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Dataset dataset_from_table(const CsvTable& table, const std::string& response,
                           const std::vector<std::string>& factors, const std::string& source) {
  if (table.rows.empty()) throw InputError(source + ": no data rows");
  if (factors.empty()) throw InputError(source + ": at least one factor column is required");
  const int ycol = table.column(response);
  if (ycol < 0) throw InputError(source + ": missing response column '" + response + "'");
  std::vector<int> xcols;
  for (const auto& f : factors) {
    const int c = table.column(f);
    if (c < 0) throw InputError(source + ": missing factor column '" + f + "'");
    xcols.push_back(c);
  }
  Dataset d;
  d.response = response;
  d.factor_names = factors;
  d.provenance = source;
  const auto N = static_cast<Eigen::Index>(table.rows.size());
  d.y.resize(N);
  d.X.resize(N, static_cast<Eigen::Index>(factors.size()));
  std::vector<std::string> problems;
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto& rec = table.rows[static_cast<std::size_t>(n)];
    // Data row n sits on line n + 2 of the file (header is line 1).
    auto cell = [&](int col, const std::string& name) {
      const auto v = parse_number(rec[static_cast<std::size_t>(col)]);
      if (!v || !std::isfinite(*v)) {
        problems.push_back("row " + std::to_string(n + 2) + " column '" + name + "'");
        return 0.0;
      }
      return *v;
    };
    d.y[n] = cell(ycol, response);
    for (std::size_t k = 0; k < xcols.size(); ++k) d.X(n, static_cast<Eigen::Index>(k)) = cell(xcols[k], factors[k]);
  }
  if (!problems.empty()) {
    std::string msg = source + ": missing or non-numeric value at " + problems.front();
    if (problems.size() > 1) msg += " (and " + std::to_string(problems.size() - 1) + " more)";
    throw InputError(msg);
  }
  d.validate();
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& response,
                 const std::vector<std::string>& factors) {
  return dataset_from_table(read_csv(path), response, factors, path.string());
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  CsvTable t;
  t.header.push_back(data.response);
  t.header.insert(t.header.end(), data.factor_names.begin(), data.factor_names.end());
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    std::vector<std::string> rec{format_double(data.y[n])};
    for (Eigen::Index k = 0; k < data.X.cols(); ++k) rec.push_back(format_double(data.X(n, k)));
    t.rows.push_back(std::move(rec));
  }
  write_csv(path, t);
}

// Standardization ---------------------------------------------------------------

namespace {

ColumnScale fit_column(const std::string& name, std::span<const double> v) {
  ColumnScale c;
  c.name = name;
  c.median = empirical_quantile(v, 0.5);
  c.iqr = empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
  if (!(c.iqr > 0.0)) {
    throw InputError("column '" + name + "' has zero interquartile range; it looks constant and cannot be standardized");
  }
  return c;
}

}  // namespace

Standardizer Standardizer::identity(const Dataset& shape) {
  Standardizer s;
  s.response.name = shape.response;
  for (const auto& n : shape.factor_names) s.factors.push_back(ColumnScale{n, 0.0, 1.0});
  return s;
}

Standardizer Standardizer::fit(const Dataset& data) {
  if (data.size() == 0) throw InputError("cannot standardize an empty dataset");
  Standardizer s;
  s.response = fit_column(data.response, {data.y.data(), static_cast<std::size_t>(data.y.size())});
  for (int k = 0; k < data.num_factors(); ++k) {
    const Eigen::VectorXd col = data.X.col(k);
    s.factors.push_back(fit_column(data.factor_names[static_cast<std::size_t>(k)],
                                   {col.data(), static_cast<std::size_t>(col.size())}));
  }
  return s;
}

Dataset Standardizer::apply(const Dataset& data) const {
  if (static_cast<int>(factors.size()) != data.num_factors()) throw ConfigError("standardizer column count mismatch");
  Dataset out = data;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    out.y[n] = response.forward(data.y[n]);
    for (Eigen::Index k = 0; k < data.X.cols(); ++k) {
      out.X(n, k) = factors[static_cast<std::size_t>(k)].forward(data.X(n, k));
    }
  }
  return out;
}

Dataset Standardizer::invert(const Dataset& data) const {
  if (static_cast<int>(factors.size()) != data.num_factors()) throw ConfigError("standardizer column count mismatch");
  Dataset out = data;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    out.y[n] = response.inverse(data.y[n]);
    for (Eigen::Index k = 0; k < data.X.cols(); ++k) {
      out.X(n, k) = factors[static_cast<std::size_t>(k)].inverse(data.X(n, k));
    }
  }
  return out;
}

std::vector<double> Standardizer::transform_factors(std::span<const double> x) const {
  if (x.size() != factors.size()) throw ConfigError("factor vector length mismatch");
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = factors[k].forward(x[k]);
  return out;
}

StandardizedData standardize(const Dataset& data) {
  Standardizer s = Standardizer::fit(data);
  return {s.apply(data), s};
}

std::vector<double> destandardize_predictions(std::span<const double> values, const Standardizer& s) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = s.destandardize(values[i]);
  return out;
}

}  // namespace fmmq
