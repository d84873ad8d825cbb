#include "fmmq/error_measures.hpp"

#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

namespace fmmq {

void ErrorKind::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("error level p must lie in (0,1), got " + std::to_string(p));
  if (type == Type::SuperquantileError) {
    if (beta_grid_size < 2) throw ConfigError("beta grid needs at least 2 points");
    if (!(beta_max > 0.0 && beta_max <= 1.0)) throw ConfigError("beta_max must lie in (0,1]");
    // Below this level the truncated integral makes the error unbounded in the location.
    if (!(p > 1.0 - beta_max)) {
      throw DomainError("superquantile error at p = " + std::to_string(p) + " requires p > 1 - beta_max");
    }
  }
}

std::string ErrorKind::name() const {
  switch (type) {
    case Type::Pinball: return "pinball";
    case Type::KoenkerBassettNormalized: return "koenker_bassett";
    case Type::SuperquantileError: return "superquantile";
    case Type::Expectile: return "expectile";
  }
  return "?";
}

double pinball(double p, double z) noexcept { return z > 0.0 ? p * z : -(1.0 - p) * z; }

double beta_grid_point(const ErrorKind& kind, int k) {
  return (k + 0.5) * kind.beta_max / kind.beta_grid_size;
}

namespace {

void check_sample(std::span<const double> sample) {
  if (sample.empty()) throw InputError("residual sample is empty");
}

// q-bar at beta from sorted values and suffix sums (suffix[j] = sum of z_(j..N-1)).
double sorted_superquantile(double beta, const std::vector<double>& z, const std::vector<double>& suffix) {
  const auto n = static_cast<double>(z.size());
  const int k = std::max(1, static_cast<int>(std::ceil(beta * n)));
  const double head = (k / n - beta) * z[static_cast<std::size_t>(k - 1)];
  const double tail = suffix[static_cast<std::size_t>(k)] / n;
  return (head + tail) / (1.0 - beta);
}

struct SortedSample {
  std::vector<double> z;
  std::vector<double> suffix;

  explicit SortedSample(std::span<const double> sample) : z(sample.begin(), sample.end()) {
    std::sort(z.begin(), z.end());
    suffix.assign(z.size() + 1, 0.0);
    for (std::size_t j = z.size(); j-- > 0;) suffix[j] = suffix[j + 1] + z[j];
  }
};

double superquantile_error(const ErrorKind& kind, const SortedSample& s, double shift) {
  const double delta = kind.beta_max / kind.beta_grid_size;
  double integral = 0.0;
  for (int k = 0; k < kind.beta_grid_size; ++k) {
    const double q = sorted_superquantile(beta_grid_point(kind, k), s.z, s.suffix) - shift;
    integral += std::max(0.0, q);
  }
  const double mean = s.suffix[0] / static_cast<double>(s.z.size()) - shift;
  return integral * delta / (1.0 - kind.p) - mean;
}

double shifted_error(const ErrorKind& kind, std::span<const double> sample, const SortedSample* sorted, double c) {
  const double p = kind.p;
  double acc = 0.0;
  switch (kind.type) {
    case ErrorKind::Type::Pinball:
      for (double z : sample) acc += pinball(p, z - c);
      break;
    case ErrorKind::Type::KoenkerBassettNormalized:
      for (double z : sample) {
        const double r = z - c;
        acc += r > 0.0 ? p / (1.0 - p) * r : -r;
      }
      break;
    case ErrorKind::Type::Expectile:
      for (double z : sample) {
        const double r = z - c;
        acc += r > 0.0 ? p * r * r : (1.0 - p) * r * r;
      }
      break;
    case ErrorKind::Type::SuperquantileError:
      return superquantile_error(kind, *sorted, c);
  }
  return acc / static_cast<double>(sample.size());
}

}  // namespace

double error_value(const ErrorKind& kind, std::span<const double> sample) {
  kind.validate();
  check_sample(sample);
  if (kind.type == ErrorKind::Type::SuperquantileError) {
    const SortedSample sorted(sample);
    return shifted_error(kind, sample, &sorted, 0.0);
  }
  return shifted_error(kind, sample, nullptr, 0.0);
}

double superquantile_error_subgradient(const ErrorKind& kind, std::span<const double> sample,
                                       std::span<double> grad) {
  kind.validate();
  if (kind.type != ErrorKind::Type::SuperquantileError) throw ConfigError("subgradient needs the superquantile error");
  check_sample(sample);
  if (grad.size() != sample.size()) throw ConfigError("gradient and sample sizes differ");
  const std::size_t n = sample.size();
  const auto nd = static_cast<double>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sample[i] < sample[j]; });
  SortedSample s(sample);

  // Weight of each sorted position in the live cells; tails go through a difference array.
  std::vector<double> head(n, 0.0);
  std::vector<double> tail(n + 1, 0.0);
  const double delta = kind.beta_max / kind.beta_grid_size;
  double integral = 0.0;
  for (int k = 0; k < kind.beta_grid_size; ++k) {
    const double beta = beta_grid_point(kind, k);
    const double q = sorted_superquantile(beta, s.z, s.suffix);
    if (!(q > 0.0)) continue;
    integral += q;
    const int kb = std::max(1, static_cast<int>(std::ceil(beta * nd)));
    head[static_cast<std::size_t>(kb - 1)] += (kb / nd - beta) / (1.0 - beta);
    tail[static_cast<std::size_t>(kb)] += 1.0 / (nd * (1.0 - beta));
  }
  const double scale = delta / (1.0 - kind.p);
  double running = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    running += tail[j];
    grad[order[j]] = scale * (head[j] + running) - 1.0 / nd;
  }
  return integral * scale - s.suffix[0] / nd;
}

double discrete_superquantile(double beta, std::span<const double> sample) {
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("superquantile level must lie in [0,1)");
  check_sample(sample);
  const SortedSample s(sample);
  return sorted_superquantile(beta, s.z, s.suffix);
}

double statistic(const ErrorKind& kind, std::span<const double> sample) {
  kind.validate();
  check_sample(sample);
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  double a = *lo_it;
  double b = *hi_it;
  if (a == b) return a;
  std::unique_ptr<SortedSample> sorted;
  if (kind.type == ErrorKind::Type::SuperquantileError) sorted = std::make_unique<SortedSample>(sample);
  auto f = [&](double c) { return shifted_error(kind, sample, sorted.get(), c); };

  const double tol = 1e-8 * std::max(1.0, b - a);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 500; ++it) {
    if (b - a <= tol) return 0.5 * (a + b);
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  throw NumericalError("statistic search did not converge");
}

}  // namespace fmmq
