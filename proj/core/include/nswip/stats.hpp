#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nswip/inducing.hpp"

namespace nswip {

/// Sorted copy of a sample.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> sample);

  std::size_t size() const noexcept { return x_.size(); }
  bool empty() const noexcept { return x_.empty(); }
  const std::vector<double>& sorted() const noexcept { return x_; }
  double min() const;
  double max() const;
  /// Linear-interpolation quantile (type 7), q in [0, 1].
  double quantile(double q) const;

 private:
  std::vector<double> x_;
};

/// #{x_i <= x} / m; throws DomainError on an empty sample.
double ecdf_eval(const EmpiricalDistribution& dist, double x);

/// sup_i max(|i/m - F(x_i)|, |(i-1)/m - F(x_i)|).
double ks_distance(const EmpiricalDistribution& dist, const std::function<double(double)>& cdf);

/// Phi(x / sigma) via erfc; sigma > 0.
double gaussian_cdf(double x, double sigma = 1.0);
/// Law of sup_{t <= 1} sigma W(t): 0 for x < 0, 2 Phi(x/sigma) - 1 otherwise.
double brownian_sup_cdf(double x, double sigma = 1.0);

struct TailIndexEstimate {
  /// Hill estimate of the reciprocal tail index.
  double gamma = 0.0;
  std::size_t k = 0;
  double tail_index = 0.0;
};

/// gamma = (1/k) sum_{i=1..k} ln(x_(m-i+1) / x_(m-k)); 1 <= k < m.
TailIndexEstimate hill_estimator(const EmpiricalDistribution& dist, std::size_t k);
/// floor(m^0.6), clamped to [1, m - 1].
std::size_t default_hill_k(std::size_t m);
/// x_i - U_i with U_i uniform on [0, 1) from rng_stream(seed, stream).
/// For integer samples with P(X >= j) ~ c j^-a this spreads each atom over
/// (j - 1, j]. Without it the Hill threshold sits inside a block of ties and
/// the estimate jumps by +-0.2 as k moves across atoms.
std::vector<double> lattice_spread(std::span<const double> x, std::uint64_t seed,
                                   std::uint64_t stream);
/// Hill estimates at `points` log-spaced k in [m^0.4, m^0.8].
std::vector<TailIndexEstimate> hill_sweep(const EmpiricalDistribution& dist,
                                          std::size_t points = 9);

/// Tail constant c of P(X > x) ~ c x^-2, with the index fixed at 2:
/// c = (k/m) u^2 at the threshold u = x_(m-k), k = floor(m^0.5).
/// For integer-valued samples u is shifted by 1/2 (P(X > u) = P(X >= u + 1)).
struct TailConstant {
  double c = 0.0;
  std::size_t k = 0;
  double threshold = 0.0;
};
TailConstant tail_constant_index2(const EmpiricalDistribution& dist, bool integer_valued);

double sample_mean(std::span<const double> x);
/// Unbiased sample variance; 0 for fewer than two points.
double unbiased_variance(std::span<const double> x);
double sample_covariance(std::span<const double> x, std::span<const double> y);

/// Gaussian-core variance (IQR / 1.3489795)^2: insensitive to the rare
/// huge excursions that dominate the second moment in the nonstandard case.
double robust_variance(std::span<const double> x);
/// Gnanadesikan-Kettenring covariance from robust variances of x + y and x - y.
double robust_covariance(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

struct VarianceScanRow {
  std::uint64_t n = 0;
  std::size_t count = 0;
  double variance = 0.0;
  double ratio_standard = 0.0;     // Var / n
  double ratio_nonstandard = 0.0;  // Var / (n ln n)
};

struct VarianceScan {
  Normalization mode = Normalization::Standard;
  std::vector<VarianceScanRow> rows;
  /// Least-squares slope of log Var against log n (NaN if degenerate).
  double slope = 0.0;
  bool degenerate = false;
};

/// sums[i] holds the ensemble of S_n for n = ns[i]; at least 100 members each.
VarianceScan variance_ratio_scan(std::span<const std::uint64_t> ns,
                                 std::span<const std::vector<double>> sums,
                                 Normalization mode);

struct CovarianceReport {
  std::vector<double> times;
  /// cov[i][j] = estimated Cov(W(t_i), W(t_j)).
  std::vector<std::vector<double>> cov;
  std::vector<std::vector<double>> target;
  double sigma2 = 0.0;
  /// max |cov - sigma2 min(s, t)| / sigma2.
  double max_rel_deviation = 0.0;
  /// Correlation of W(1/2) - W(0) and W(1) - W(1/2).
  double increment_correlation = 0.0;
  bool robust = false;
};

/// values[p][i] = W(times[i]) on path p. The grid must contain 1/2 and 1.
/// With robust = true covariances are Gnanadesikan-Kettenring estimates.
/// sigma2 <= 0 means: estimate it from W(1) with the same estimator.
CovarianceReport covariance_increments_report(const std::vector<std::vector<double>>& values,
                                              std::span<const double> times,
                                              double sigma2 = 0.0, bool robust = false);
/// Convenience overload evaluating PathSample objects on the grid.
CovarianceReport covariance_increments_report(std::span<const PathSample> paths,
                                              std::span<const double> times,
                                              double sigma2 = 0.0, bool robust = false);

}  // namespace nswip
