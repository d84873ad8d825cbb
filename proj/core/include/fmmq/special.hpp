#pragma once

namespace fmmq::special {

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;

/// Standard normal quantile, sqrt(2) * erfinv(2p - 1).
/// Rational first guess refined by Halley steps on erfc; |rel err| < 1e-13 on (1e-300, 1 - 1e-16).
/// Returns -inf/+inf at p = 0/1, NaN outside [0, 1].
double normal_quantile(double p) noexcept;

/// Inverse error function on (-1, 1).
double erf_inv(double x) noexcept;

/// Binary entropy -p ln p - (1-p) ln(1-p) with the 0 ln 0 = 0 convention.
double binary_entropy(double p) noexcept;

}  // namespace fmmq::special
