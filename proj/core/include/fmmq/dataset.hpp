#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fmmq {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Response y_n with factor rows x_n, all finite.
struct Dataset {
  std::string response = "y";
  std::vector<std::string> factor_names;
  Eigen::VectorXd y;
  RowMatrix X;  ///< N x K
  std::string provenance;

  Eigen::Index size() const { return y.size(); }
  int num_factors() const { return static_cast<int>(X.cols()); }
  std::span<const double> row(Eigen::Index n) const {
    return {X.data() + n * X.cols(), static_cast<std::size_t>(X.cols())};
  }
  Dataset subset(std::span<const Eigen::Index> rows) const;

  /// Throws InputError on shape mismatch, non-finite values or duplicate names.
  void validate() const;
};

/// Empirical quantile with linear interpolation between order statistics:
/// h = (n - 1) q, value = z_(floor h) + (h - floor h)(z_(floor h + 1) - z_(floor h)).
double empirical_quantile(std::span<const double> values, double q);

// CSV -------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column or -1.
  int column(const std::string& name) const;
};

/// Parse RFC-4180 style text (quoted fields, doubled quotes, CRLF tolerated).
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);

/// Write through a temporary file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

Dataset load_csv(const std::filesystem::path& path, const std::string& response,
                 const std::vector<std::string>& factors);
Dataset dataset_from_table(const CsvTable& table, const std::string& response,
                           const std::vector<std::string>& factors, const std::string& source);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

// Standardization ---------------------------------------------------------------

struct ColumnScale {
  std::string name;
  double median = 0.0;
  double iqr = 1.0;

  double forward(double v) const { return (v - median) / iqr; }
  double inverse(double v) const { return v * iqr + median; }
  bool operator==(const ColumnScale&) const = default;
};

struct Standardizer {
  ColumnScale response;
  std::vector<ColumnScale> factors;

  static Standardizer identity(const Dataset& shape);
  /// Fit median and interquartile range per column. Throws InputError on a zero IQR.
  static Standardizer fit(const Dataset& data);

  Dataset apply(const Dataset& data) const;
  Dataset invert(const Dataset& data) const;
  std::vector<double> transform_factors(std::span<const double> x) const;
  double destandardize(double v) const { return response.inverse(v); }
  bool operator==(const Standardizer&) const = default;
};

struct StandardizedData {
  Dataset data;
  Standardizer standardizer;
};

StandardizedData standardize(const Dataset& data);
std::vector<double> destandardize_predictions(std::span<const double> values, const Standardizer& s);

}  // namespace fmmq
