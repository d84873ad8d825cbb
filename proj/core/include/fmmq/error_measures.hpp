#pragma once

#include <span>
#include <string>

namespace fmmq {

/// Error functional applied to a discrete residual sample with equal weights.
struct ErrorKind {
  enum class Type { Pinball, KoenkerBassettNormalized, SuperquantileError, Expectile };

  Type type = Type::Pinball;
  double p = 0.5;
  /// Number of midpoint cells on (0, beta_max] used by SuperquantileError.
  int beta_grid_size = 200;
  double beta_max = 0.999;

  static ErrorKind pinball(double p) { return {Type::Pinball, p}; }
  static ErrorKind koenker_bassett(double p) { return {Type::KoenkerBassettNormalized, p}; }
  static ErrorKind superquantile(double p, int grid = 200, double beta_max = 0.999) {
    return {Type::SuperquantileError, p, grid, beta_max};
  }
  static ErrorKind expectile(double p) { return {Type::Expectile, p}; }

  /// Throws DomainError/ConfigError when p or the grid is unusable.
  void validate() const;
  std::string name() const;
};

double pinball(double p, double z) noexcept;

/// Mean error of the sample. Throws InputError on an empty sample.
double error_value(const ErrorKind& kind, std::span<const double> sample);

/// SuperquantileError value of the sample, with a subgradient with respect to each
/// sample entry written to grad (same length as sample).
double superquantile_error_subgradient(const ErrorKind& kind, std::span<const double> sample, std::span<double> grad);

/// Tail average of the sorted sample beyond level beta, splitting the atom at the boundary.
double discrete_superquantile(double beta, std::span<const double> sample);

/// argmin over C of error_value(kind, sample - C), by golden-section search on [min, max].
double statistic(const ErrorKind& kind, std::span<const double> sample);

/// Midpoint beta values of the SuperquantileError grid.
double beta_grid_point(const ErrorKind& kind, int k);

}  // namespace fmmq
