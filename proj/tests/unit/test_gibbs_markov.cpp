#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "nswip/errors.hpp"
#include "nswip/gibbs_markov.hpp"
#include "nswip/numeric.hpp"
#include "nswip/rng.hpp"

using namespace nswip;

namespace {

// Dense index of a symbol in DenseMarkovChain::from_model order.
std::size_t dense_index(Symbol s) {
  return 2 * (symbol_magnitude(s) - 1) + (s > 0 ? 0 : 1);
}

std::vector<double> to_dense(const SymbolFunction& f) {
  std::vector<double> out(2 * f.k_max());
  for (std::uint32_t k = 1; k <= f.k_max(); ++k) {
    out[2 * (k - 1)] = f(static_cast<Symbol>(k));
    out[2 * (k - 1) + 1] = f(-static_cast<Symbol>(k));
  }
  return out;
}

SymbolFunction random_function(std::uint32_t K, RngStream& rng) {
  SymbolFunction f(K);
  for (double& x : f.plus()) x = rng.normal();
  for (double& x : f.minus()) x = rng.normal();
  return f;
}

double lag1_sign_correlation(std::span<const Symbol> path) {
  double s = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) s += symbol_sign(path[i]);
  const double mean = s / static_cast<double>(path.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double a = symbol_sign(path[i]) - mean;
    den += a * a;
    if (i + 1 < path.size()) num += a * (symbol_sign(path[i + 1]) - mean);
  }
  return num / den;
}

}  // namespace

TEST_CASE("model construction") {
  const auto m = build_model(1'000'000, 0.5);
  CHECK(m.sigma2() == doctest::Approx(0.41595).epsilon(1e-4));
  CompensatedSum total;
  for (double p : m.magnitude_law()) total.add(p);
  CHECK(std::abs(total.value() - 1.0) <= 1e-14);
  CHECK(m.value(-7) == -7.0);

  const auto scaled = build_model(1000, 0.3, 2.0);
  CHECK(scaled.sigma2() == doctest::Approx(2.0));
  CHECK(scaled.value(1) == doctest::Approx(std::sqrt(2.0 * 2.0 * scaled.zeta3())));

  CHECK_THROWS_AS(build_model(99, 0.5), DomainError);
  CHECK_THROWS_AS(build_model(1000, 0.95), DomainError);
  CHECK_THROWS_AS(build_model(1000, -0.1), DomainError);
}

TEST_CASE("stationarity of the dense chain") {
  for (const double eps : {0.0, 0.5, 0.9}) {
    const auto m = build_model(100, eps);
    const auto dense = DenseMarkovChain::from_model(m);
    CHECK(dense.stationarity_defect() <= 1e-14);
    for (const auto& row : dense.P()) {
      CompensatedSum s;
      for (double p : row) {
        REQUIRE(p > 0.0);
        s.add(p);
      }
      CHECK(std::abs(s.value() - 1.0) <= 1e-14);
    }
  }
}

TEST_CASE("two-state transfer operator") {
  const DenseMarkovChain chain({5.0 / 6.0, 1.0 / 6.0}, {{0.9, 0.1}, {0.5, 0.5}});
  const std::vector<double> u{1.0, -1.0};
  const auto Lu = chain.transfer_apply(u);
  CHECK(Lu[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(std::abs(Lu[1]) <= 1e-14);
  CHECK(chain.integrate(Lu) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(chain.integrate(u) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("structured transfer operator matches the dense oracle") {
  RngStream rng = rng_stream(51, 0);
  for (const double eps : {0.0, 0.5}) {
    const auto m = build_model(100, eps);
    const auto dense = DenseMarkovChain::from_model(m);
    for (int trial = 0; trial < 10; ++trial) {
      const auto u = random_function(100, rng);
      const auto w = random_function(100, rng);
      const auto Lu = transfer_apply(m, u);
      const auto Lu_dense = dense.transfer_apply(to_dense(u));
      for (Symbol s : {1, -1, 2, -37, 100, -100}) {
        CHECK(Lu(s) == doctest::Approx(Lu_dense[dense_index(s)]).epsilon(1e-12));
      }
      // Duality: int (Lu) w = int u (w o F).
      SymbolFunction prod = Lu;
      for (std::uint32_t k = 1; k <= 100; ++k) {
        prod.at(static_cast<Symbol>(k)) *= w(static_cast<Symbol>(k));
        prod.at(-static_cast<Symbol>(k)) *= w(-static_cast<Symbol>(k));
      }
      const double lhs = integrate(m, prod);
      const double rhs = dense.correlation(to_dense(u), to_dense(w));
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("i.i.d. transfer operator averages") {
  const auto m = build_model(200, 0.0);
  RngStream rng = rng_stream(52, 0);
  auto u = random_function(200, rng);
  const double mean = integrate(m, u);
  for (double& x : u.plus()) x -= mean;
  for (double& x : u.minus()) x -= mean;
  CHECK(transfer_apply(m, u).sup_norm() <= 1e-12);
}

TEST_CASE("sampling") {
  const auto m = build_model(100'000, 0.5);
  RngStream a = rng_stream(53, 0), b = rng_stream(53, 0);
  CHECK(sample_path(m, a, 1000) == sample_path(m, b, 1000));
  CHECK_THROWS_AS(sample_path(m, a, 0), DomainError);

  SUBCASE("eps = 0 signs are uncorrelated") {
    const auto m0 = build_model(1000, 0.0);
    RngStream r = rng_stream(54, 0);
    const auto path = sample_path(m0, r, 1'000'000);
    CHECK(std::abs(lag1_sign_correlation(path)) <= 3.0 / std::sqrt(1e6));
  }
  SUBCASE("eps = 0.5 lag-1 sign correlation") {
    RngStream r = rng_stream(55, 0);
    const std::size_t N = 1'000'000;
    const auto path = sample_path(m, r, N);
    // Two-state chain with flip probability (1 - eps)/2: correlation eps,
    // asymptotic variance (1 - eps^2)/N.
    const double se = std::sqrt((1.0 - 0.25) / static_cast<double>(N));
    CHECK(std::abs(lag1_sign_correlation(path) - 0.5) <= 3.0 * se);
  }
}

TEST_CASE("symbol frequencies pass chi-square") {
  const auto m = build_model(1'000'000, 0.0);
  RngStream r = rng_stream(56, 0);
  const std::size_t N = 10'000'000;
  // The 1000 most probable states are (k, +-) for k <= 500. States with an
  // expected count below 5 are pooled into one bin.
  constexpr std::uint32_t kTop = 500;
  std::vector<double> counts(2 * kTop + 1, 0.0);
  GmSampler sampler(m, r);
  for (std::size_t i = 0; i < N; ++i) {
    const Symbol s = sampler.next();
    const std::uint32_t k = symbol_magnitude(s);
    if (k <= kTop) counts[dense_index(s)] += 1.0;
    else counts.back() += 1.0;
  }
  double chi2 = 0.0, pooled_obs = counts.back(), pooled_exp = 0.0;
  std::size_t bins = 0;
  for (std::uint32_t k = 1; k <= m.k_max(); ++k) {
    const double e = static_cast<double>(N) * m.pi(static_cast<Symbol>(k));
    if (k <= kTop && e >= 5.0) {
      for (Symbol s : {static_cast<Symbol>(k), -static_cast<Symbol>(k)}) {
        const double o = counts[dense_index(s)];
        chi2 += (o - e) * (o - e) / e;
        ++bins;
      }
    } else {
      pooled_exp += 2.0 * e;
      if (k <= kTop) pooled_obs += counts[dense_index(static_cast<Symbol>(k))] +
                                   counts[dense_index(-static_cast<Symbol>(k))];
    }
  }
  chi2 += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
  ++bins;
  const boost::math::chi_squared dist(static_cast<double>(bins - 1));
  CHECK(chi2 <= boost::math::quantile(dist, 0.999));
}

TEST_CASE("martingale decomposition") {
  // (1e4 ln ln 1e4)^{1/2}, evaluated in double precision offline.
  CHECK(truncation_level(10'000) == doctest::Approx(149.00761076).epsilon(1e-9));
  CHECK_THROWS_AS(truncation_level(15), DomainError);

  SUBCASE("eps = 0 has chi = 0") {
    const auto m = build_model(10'000, 0.0);
    const auto d = martingale_decompose(m, 10'000);
    CHECK(d.chi.sup_norm() == 0.0);
    CHECK(d.m(3, -5) == d.V_n(3));
  }
  SUBCASE("cohomology and kernel") {
    const auto m = build_model(100'000, 0.5);
    const auto d = martingale_decompose(m, 100'000);
    CHECK(integrate(m, d.V_n) == doctest::Approx(0.0).scale(1.0).epsilon(1e-13));
    // chi solves chi = L V_n + L chi.
    auto rhs = transfer_apply(m, d.V_n);
    rhs += transfer_apply(m, d.chi);
    for (Symbol s : {1, -1, 17, -300, 99'999}) CHECK(std::abs(rhs(s) - d.chi(s)) <= 1e-12);
    CHECK(pair_transfer_of_m(m, d).sup_norm() <= 1e-12);

    RngStream r = rng_stream(57, 0);
    const auto path = sample_path(m, r, 10'001);
    for (std::size_t j = 0; j + 1 < path.size(); ++j) {
      const Symbol a = path[j], b = path[j + 1];
      REQUIRE(std::abs(d.V_n(a) - (d.m(a, b) + d.chi(b) - d.chi(a))) <= 1e-12);
    }
    CHECK(martingale_square_sum(d, std::span<const Symbol>(path).first(3)) ==
          doctest::Approx(d.m(path[0], path[1]) * d.m(path[0], path[1]) +
                          d.m(path[1], path[2]) * d.m(path[1], path[2])));
  }
}

TEST_CASE("moment report") {
  const std::vector<std::uint64_t> grid{1'000, 10'000, 100'000, 1'000'000};
  SUBCASE("eps = 0 second moment") {
    const auto m = build_model(1'000'000, 0.0);
    const auto rep = moment_report(m, grid);
    const auto& last = rep.rows.back();
    CHECK(std::abs(last.m2_over_log_n / m.sigma2() - 1.0) <= 0.2);
    // Exact truncated moment 2 sum_{k <= q_n} k^2 pi_k, minus the squared mean (zero).
    CompensatedSum s;
    for (std::uint32_t k = 1; k <= static_cast<std::uint32_t>(last.q_n); ++k) {
      s.add(static_cast<double>(k) * k * m.magnitude_law()[k - 1]);
    }
    CHECK(last.m2 == doctest::Approx(s.value()).epsilon(1e-12));
  }
  SUBCASE("eps = 0.5 chi bound, kernel, decorrelation") {
    const auto m = build_model(1'000'000, 0.5);
    const auto rep = moment_report(m, grid);
    CHECK(rep.chi_ratio <= 3.0);
    for (const auto& row : rep.rows) {
      CHECK(row.kernel_residual <= 1e-12);
      CHECK(row.decorrelation.size() == kDecorrelationLags);
      CHECK(row.decorrelation_geometric);
      CHECK(row.decorrelation_gamma < 1.0);
    }
  }
}
