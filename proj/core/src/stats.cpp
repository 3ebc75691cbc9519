#include "nswip/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nswip/errors.hpp"
#include "nswip/numeric.hpp"
#include "nswip/rng.hpp"

namespace nswip {

namespace {

constexpr double kIqrToSigma = 1.3489795003921634;  // 2 Phi^{-1}(3/4)

void require_nonempty(const EmpiricalDistribution& d) {
  if (d.empty()) throw DomainError("empty sample");
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> sample)
    : x_(std::move(sample)) {
  for (double v : x_) {
    if (std::isnan(v)) throw DomainError("EmpiricalDistribution: NaN in sample");
  }
  std::sort(x_.begin(), x_.end());
}

double EmpiricalDistribution::min() const {
  require_nonempty(*this);
  return x_.front();
}

double EmpiricalDistribution::max() const {
  require_nonempty(*this);
  return x_.back();
}

double EmpiricalDistribution::quantile(double q) const {
  require_nonempty(*this);
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q outside [0, 1]");
  return quantile_sorted(x_, q);
}

double ecdf_eval(const EmpiricalDistribution& dist, double x) {
  require_nonempty(dist);
  const auto& s = dist.sorted();
  const auto it = std::upper_bound(s.begin(), s.end(), x);
  return static_cast<double>(it - s.begin()) / static_cast<double>(s.size());
}

double ks_distance(const EmpiricalDistribution& dist,
                   const std::function<double(double)>& cdf) {
  require_nonempty(dist);
  const auto& s = dist.sorted();
  const double m = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = cdf(s[i]);
    d = std::max(d, std::abs(static_cast<double>(i + 1) / m - F));
    d = std::max(d, std::abs(static_cast<double>(i) / m - F));
  }
  return d;
}

double gaussian_cdf(double x, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_cdf: sigma must be positive");
  return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2));
}

double brownian_sup_cdf(double x, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("brownian_sup_cdf: sigma must be positive");
  if (x < 0.0) return 0.0;
  // 2 Phi(z) - 1 = erf(z / sqrt2), computed without cancellation.
  return std::erf(x / (sigma * std::numbers::sqrt2));
}

// ---------------------------------------------------------------------------

TailIndexEstimate hill_estimator(const EmpiricalDistribution& dist, std::size_t k) {
  const std::size_t m = dist.size();
  if (k < 1 || k >= m) throw DomainError("hill_estimator: need 1 <= k < m");
  const auto& s = dist.sorted();
  const double base = s[m - k - 1];
  if (!(base > 0.0)) throw DomainError("hill_estimator: nonpositive order statistic");
  const double lb = std::log(base);
  CompensatedSum acc;
  for (std::size_t i = 1; i <= k; ++i) acc.add(std::log(s[m - i]) - lb);
  TailIndexEstimate est;
  est.k = k;
  est.gamma = acc.value() / static_cast<double>(k);
  est.tail_index = est.gamma > 0.0 ? 1.0 / est.gamma
                                   : std::numeric_limits<double>::infinity();
  return est;
}

std::size_t default_hill_k(std::size_t m) {
  if (m < 2) throw DomainError("default_hill_k: need m >= 2");
  // pow rounds 1e5^0.6 to 999.99...; nudge so exact powers floor correctly.
  const auto k = static_cast<std::size_t>(
      std::floor(std::pow(static_cast<double>(m), 0.6) * (1.0 + 1e-12)));
  return std::clamp<std::size_t>(k, 1, m - 1);
}

std::vector<TailIndexEstimate> hill_sweep(const EmpiricalDistribution& dist,
                                          std::size_t points) {
  const std::size_t m = dist.size();
  if (m < 2 || points < 1) throw DomainError("hill_sweep: need m >= 2 and points >= 1");
  const double lo = 0.4 * std::log(static_cast<double>(m));
  const double hi = 0.8 * std::log(static_cast<double>(m));
  std::vector<TailIndexEstimate> out;
  std::size_t last = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    auto k = static_cast<std::size_t>(std::floor(std::exp(lo + f * (hi - lo))));
    k = std::clamp<std::size_t>(k, 1, m - 1);
    if (k == last) continue;
    last = k;
    out.push_back(hill_estimator(dist, k));
  }
  return out;
}

std::vector<double> lattice_spread(std::span<const double> x, std::uint64_t seed,
                                   std::uint64_t stream) {
  RngStream rng = rng_stream(seed, stream);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - rng.uniform();
  return out;
}

TailConstant tail_constant_index2(const EmpiricalDistribution& dist, bool integer_valued) {
  const std::size_t m = dist.size();
  if (m < 4) throw DomainError("tail_constant_index2: need m >= 4");
  auto k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(m))));
  k = std::clamp<std::size_t>(k, 1, m - 1);
  const double u = dist.sorted()[m - k - 1] + (integer_valued ? 0.5 : 0.0);
  TailConstant t;
  t.k = k;
  t.threshold = u;
  t.c = static_cast<double>(k) / static_cast<double>(m) * u * u;
  return t;
}

// ---------------------------------------------------------------------------

double sample_mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("sample_mean: empty sample");
  return tree_mean(x);
}

double unbiased_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = tree_mean(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mu) * (x[i] - mu);
  return tree_sum(sq) / static_cast<double>(x.size() - 1);
}

double sample_covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("sample_covariance: size mismatch");
  if (x.size() < 2) throw DomainError("sample_covariance: need at least two points");
  const double mx = tree_mean(x);
  const double my = tree_mean(y);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = (x[i] - mx) * (y[i] - my);
  return tree_sum(p) / static_cast<double>(x.size() - 1);
}

double robust_variance(std::span<const double> x) {
  if (x.size() < 4) throw DomainError("robust_variance: need at least four points");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  const double sd = iqr / kIqrToSigma;
  return sd * sd;
}

double robust_covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("robust_covariance: size mismatch");
  std::vector<double> plus(x.size()), minus(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] = x[i] + y[i];
    minus[i] = x[i] - y[i];
  }
  return 0.25 * (robust_variance(plus) - robust_variance(minus));
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DomainError("least_squares: need two or more paired points");
  }
  const double mx = tree_mean(x);
  const double my = tree_mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("least_squares: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

// ---------------------------------------------------------------------------

VarianceScan variance_ratio_scan(std::span<const std::uint64_t> ns,
                                 std::span<const std::vector<double>> sums,
                                 Normalization mode) {
  if (ns.size() != sums.size()) throw DomainError("variance_ratio_scan: size mismatch");
  VarianceScan scan;
  scan.mode = mode;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (sums[i].size() < 100) {
      throw DomainError("variance_ratio_scan: need at least 100 ensemble members");
    }
    if (ns[i] < 2) throw DomainError("variance_ratio_scan: n must be >= 2");
    VarianceScanRow row;
    row.n = ns[i];
    row.count = sums[i].size();
    row.variance = unbiased_variance(sums[i]);
    const double n = static_cast<double>(ns[i]);
    row.ratio_standard = row.variance / n;
    row.ratio_nonstandard = row.variance / (n * std::log(n));
    if (row.variance > 0.0) {
      lx.push_back(std::log(n));
      ly.push_back(std::log(row.variance));
    } else {
      scan.degenerate = true;
    }
    scan.rows.push_back(row);
  }
  if (scan.degenerate || lx.size() < 2) {
    scan.degenerate = true;
    scan.slope = std::numeric_limits<double>::quiet_NaN();
  } else {
    scan.slope = least_squares(lx, ly).slope;
  }
  return scan;
}

CovarianceReport covariance_increments_report(const std::vector<std::vector<double>>& values,
                                              std::span<const double> times, double sigma2,
                                              bool robust) {
  if (values.size() < 2) throw DomainError("covariance report: need at least two paths");
  if (robust && values.size() < 4) throw DomainError("covariance report: too few paths");
  const std::size_t T = times.size();
  std::size_t i_half = T, i_one = T;
  for (std::size_t i = 0; i < T; ++i) {
    if (!(times[i] > 0.0 && times[i] <= 1.0)) {
      throw DomainError("covariance report: times must lie in (0, 1]");
    }
    if (times[i] == 0.5) i_half = i;
    if (times[i] == 1.0) i_one = i;
  }
  if (i_half == T || i_one == T) {
    throw DomainError("covariance report: grid must contain 1/2 and 1");
  }
  std::vector<std::vector<double>> cols(T, std::vector<double>(values.size()));
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (values[p].size() != T) throw DomainError("covariance report: ragged input");
    for (std::size_t i = 0; i < T; ++i) cols[i][p] = values[p][i];
  }
  auto cov = [&](const std::vector<double>& a, const std::vector<double>& b) {
    return robust ? robust_covariance(a, b) : sample_covariance(a, b);
  };

  CovarianceReport rep;
  rep.robust = robust;
  rep.times.assign(times.begin(), times.end());
  rep.sigma2 = sigma2 > 0.0 ? sigma2
                            : (robust ? robust_variance(cols[i_one])
                                      : unbiased_variance(cols[i_one]));
  rep.cov.assign(T, std::vector<double>(T));
  rep.target.assign(T, std::vector<double>(T));
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i; j < T; ++j) {
      const double c = cov(cols[i], cols[j]);
      rep.cov[i][j] = rep.cov[j][i] = c;
      const double t = rep.sigma2 * std::min(times[i], times[j]);
      rep.target[i][j] = rep.target[j][i] = t;
      rep.max_rel_deviation = std::max(rep.max_rel_deviation, std::abs(c - t) / rep.sigma2);
    }
  }
  std::vector<double> inc2(values.size());
  for (std::size_t p = 0; p < values.size(); ++p) inc2[p] = cols[i_one][p] - cols[i_half][p];
  const std::vector<double>& inc1 = cols[i_half];
  const double v1 = robust ? robust_variance(inc1) : unbiased_variance(inc1);
  const double v2 = robust ? robust_variance(inc2) : unbiased_variance(inc2);
  const double c12 = cov(inc1, inc2);
  rep.increment_correlation = (v1 > 0.0 && v2 > 0.0) ? c12 / std::sqrt(v1 * v2) : 0.0;
  return rep;
}

CovarianceReport covariance_increments_report(std::span<const PathSample> paths,
                                              std::span<const double> times, double sigma2,
                                              bool robust) {
  std::vector<std::vector<double>> values;
  values.reserve(paths.size());
  for (const auto& p : paths) {
    std::vector<double> row;
    row.reserve(times.size());
    for (double t : times) row.push_back(p(t));
    values.push_back(std::move(row));
  }
  return covariance_increments_report(values, times, sigma2, robust);
}

}  // namespace nswip
