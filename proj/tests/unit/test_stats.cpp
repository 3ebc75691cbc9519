#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nswip/errors.hpp"
#include "nswip/inducing.hpp"
#include "nswip/rng.hpp"
#include "nswip/stats.hpp"

using namespace nswip;

namespace {

std::vector<double> pareto_grid(std::size_t m, double power) {
  std::vector<double> x(m);
  for (std::size_t i = 1; i <= m; ++i) {
    x[i - 1] = std::pow(static_cast<double>(i) / static_cast<double>(m), -power);
  }
  return x;
}

// Ensemble of Gaussian random-walk sums at each n, scaled by c.
std::vector<std::vector<double>> gaussian_sums(std::span<const std::uint64_t> ns,
                                               std::size_t paths, double c,
                                               std::uint64_t seed) {
  std::vector<std::vector<double>> out(ns.size());
  for (std::size_t p = 0; p < paths; ++p) {
    RngStream rng = rng_stream(seed, p);
    double s = 0.0;
    std::uint64_t done = 0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      for (; done < ns[i]; ++done) s += rng.normal();
      out[i].push_back(c * s);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("ecdf examples and step structure") {
  const EmpiricalDistribution d({3.0, 1.0, 2.0});
  CHECK(ecdf_eval(d, 2.0) == doctest::Approx(2.0 / 3.0));
  CHECK(ecdf_eval(d, 0.5) == 0.0);
  CHECK(ecdf_eval(d, 9.0) == 1.0);
  CHECK(d.min() == 1.0);
  CHECK(d.max() == 3.0);
  CHECK(d.quantile(0.5) == 2.0);
  CHECK_THROWS_AS(ecdf_eval(EmpiricalDistribution({}), 0.0), DomainError);

  RngStream rng = rng_stream(61, 0);
  std::vector<double> x(200);
  for (double& v : x) v = rng.normal();
  const EmpiricalDistribution e(x);
  double prev = 0.0;
  for (double t = -4.0; t <= 4.0; t += 0.01) {
    const double f = ecdf_eval(e, t);
    REQUIRE(f >= prev);
    const double scaled = f * 200.0;
    REQUIRE(std::abs(scaled - std::round(scaled)) <= 1e-9);
    prev = f;
  }
  // Right-continuity at sample points.
  for (double v : e.sorted()) CHECK(ecdf_eval(e, v) > ecdf_eval(e, std::nextafter(v, -1e300)));
}

TEST_CASE("ks_distance examples") {
  auto phi = [](double x) { return gaussian_cdf(x); };
  CHECK(ks_distance(EmpiricalDistribution({0.0}), phi) == doctest::Approx(0.5));
  const std::size_t m = 100;
  std::vector<double> u(m);
  for (std::size_t i = 1; i <= m; ++i) u[i - 1] = (static_cast<double>(i) - 0.5) / m;
  auto unif = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_distance(EmpiricalDistribution(u), unif) == doctest::Approx(0.5 / m));
  CHECK_THROWS_AS(ks_distance(EmpiricalDistribution({}), unif), DomainError);

  // Invariance under a strictly increasing map applied to both sides.
  RngStream rng = rng_stream(62, 0);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    y[i] = std::exp(x[i]);
  }
  const double a = ks_distance(EmpiricalDistribution(x), phi);
  const double b = ks_distance(EmpiricalDistribution(y),
                               [](double v) { return v > 0 ? gaussian_cdf(std::log(v)) : 0.0; });
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("Gaussian and Brownian sup CDFs") {
  CHECK(gaussian_cdf(0.0) == 0.5);
  CHECK(gaussian_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-7));
  CHECK(gaussian_cdf(2.0, 2.0) == doctest::Approx(gaussian_cdf(1.0)));
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    CHECK(std::abs(gaussian_cdf(-x) - (1.0 - gaussian_cdf(x))) <= 1e-15);
  }
  CHECK_THROWS_AS(gaussian_cdf(0.0, 0.0), DomainError);
  CHECK(brownian_sup_cdf(0.0) == 0.0);
  CHECK(brownian_sup_cdf(-1.0) == 0.0);
  CHECK(brownian_sup_cdf(1.0) == doctest::Approx(0.6826895).epsilon(1e-7));
  CHECK(brownian_sup_cdf(40.0) == 1.0);
  CHECK_THROWS_AS(brownian_sup_cdf(1.0, -1.0), DomainError);
}

TEST_CASE("Hill estimator") {
  const EmpiricalDistribution p2(pareto_grid(100'000, 0.5));
  const auto h = hill_estimator(p2, 1000);
  CHECK(h.gamma == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(h.gamma - 0.5) <= 0.02);
  CHECK(h.tail_index == doctest::Approx(1.0 / h.gamma));
  CHECK(h.k == 1000);
  const EmpiricalDistribution p1(pareto_grid(100'000, 1.0));
  CHECK(std::abs(hill_estimator(p1, 1000).gamma - 1.0) <= 0.02);
  CHECK_THROWS_AS(hill_estimator(p1, 100'000), DomainError);
  CHECK_THROWS_AS(hill_estimator(p1, 0), DomainError);
  CHECK_THROWS_AS(hill_estimator(EmpiricalDistribution({-3.0, -2.0, -1.0}), 1), DomainError);
  CHECK(default_hill_k(100'000) == 1000);

  // Scale invariance.
  auto scaled = pareto_grid(100'000, 0.5);
  for (double& v : scaled) v *= 7.25;
  CHECK(hill_estimator(EmpiricalDistribution(scaled), 1000).gamma ==
        doctest::Approx(h.gamma).epsilon(1e-12));

  const auto sweep = hill_sweep(p2);
  CHECK(sweep.size() == 9);
  for (const auto& s : sweep) CHECK(std::abs(s.gamma - 0.5) <= 0.05);
}

TEST_CASE("Hill on integer samples after lattice spreading") {
  const std::vector<double> ints = {1.0, 2.0, 2.0, 5.0};
  const auto a = lattice_spread(ints, 3, 0);
  const auto b = lattice_spread(ints, 3, 0);
  CHECK(a == b);
  for (std::size_t i = 0; i < ints.size(); ++i) {
    CHECK(a[i] <= ints[i]);
    CHECK(a[i] > ints[i] - 1.0);
  }
  // ceil of a Pareto(2) variable, P(X >= j) = 0.65 / (j - 1)^2 for large j.
  const std::size_t m = 1'000'000;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream rng = rng_stream(seed, 0);
    std::vector<double> x(m);
    for (double& v : x) v = std::ceil(std::sqrt(0.65 / rng.uniform_open()));
    const auto h = hill_estimator(EmpiricalDistribution(lattice_spread(x, seed, 1)),
                                  default_hill_k(m));
    CHECK(h.tail_index >= 1.9);
    CHECK(h.tail_index <= 2.1);
  }
}

TEST_CASE("tail constant at index 2") {
  // P(X > x) = x^-2 on [1, inf): c = 1.
  const EmpiricalDistribution p(pareto_grid(1'000'000, 0.5));
  const auto tc = tail_constant_index2(p, false);
  CHECK(tc.k == 1000);
  CHECK(tc.c == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("robust variance and covariance") {
  RngStream rng = rng_stream(63, 0);
  std::vector<double> x(200'000), y(200'000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = rng.normal(), b = rng.normal();
    x[i] = 2.0 * a;
    y[i] = a + b;
  }
  CHECK(robust_variance(x) == doctest::Approx(4.0).epsilon(0.02));
  CHECK(robust_covariance(x, y) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(sample_covariance(x, y) == doctest::Approx(2.0).epsilon(0.03));
  const std::vector<double> one{1.0};
  CHECK(unbiased_variance(one) == 0.0);
  const auto fit = least_squares(std::vector<double>{0, 1, 2}, std::vector<double>{1, 3, 5});
  CHECK(fit.slope == doctest::Approx(2.0));
  CHECK(fit.intercept == doctest::Approx(1.0));
}

TEST_CASE("variance ratio scan") {
  const std::vector<std::uint64_t> ns{100, 400, 1600};
  const auto sums = gaussian_sums(ns, 2000, 1.0, 64);
  const auto scan = variance_ratio_scan(ns, sums, Normalization::Standard);
  REQUIRE(scan.rows.size() == 3);
  for (const auto& r : scan.rows) CHECK(std::abs(r.ratio_standard - 1.0) <= 0.1);
  CHECK(std::abs(scan.slope - 1.0) <= 0.05);
  CHECK_FALSE(scan.degenerate);

  // Scaling by c multiplies every variance by c^2.
  const auto sums3 = gaussian_sums(ns, 2000, 3.0, 64);
  const auto scan3 = variance_ratio_scan(ns, sums3, Normalization::Standard);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(scan3.rows[i].variance == doctest::Approx(9.0 * scan.rows[i].variance).epsilon(1e-12));
  }

  const std::vector<std::vector<double>> zeros(3, std::vector<double>(200, 0.0));
  const auto deg = variance_ratio_scan(ns, zeros, Normalization::Nonstandard);
  CHECK(deg.degenerate);
  for (const auto& r : deg.rows) CHECK(r.variance == 0.0);

  const std::vector<std::vector<double>> few(3, std::vector<double>(50, 1.0));
  CHECK_THROWS_AS(variance_ratio_scan(ns, few, Normalization::Standard), DomainError);
}

TEST_CASE("covariance report on Brownian paths") {
  const std::vector<double> times{0.25, 0.5, 0.75, 1.0};
  std::vector<PathSample> paths;
  const std::uint64_t n = 64;
  for (std::size_t p = 0; p < 4000; ++p) {
    RngStream rng = rng_stream(65, p);
    std::vector<double> inc(n);
    for (double& v : inc) v = rng.normal();
    paths.push_back(path_process(inc, n, Normalization::Standard));
  }
  const auto rep = covariance_increments_report(paths, times, 1.0);
  CHECK(rep.cov[1][3] == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(rep.cov[1][3] - 0.5) <= 0.05);
  CHECK(std::abs(rep.increment_correlation) <= 0.05);
  CHECK(rep.max_rel_deviation <= 0.1);
  CHECK(rep.target[0][2] == 0.25);

  const auto robust = covariance_increments_report(paths, times, 0.0, true);
  CHECK(robust.robust);
  CHECK(robust.sigma2 == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(robust.increment_correlation) <= 0.05);

  const std::vector<PathSample> one(paths.begin(), paths.begin() + 1);
  CHECK_THROWS_AS(covariance_increments_report(one, times), DomainError);
}
