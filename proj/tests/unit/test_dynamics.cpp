#include <doctest.h>

#include <cmath>
#include <cstring>

#include "nswip/dynamics.hpp"
#include "nswip/errors.hpp"
#include "nswip/rng.hpp"

using namespace nswip;

namespace {

// Folded double-neutral step, written out independently of Orbit.
void dn_folded_step(double& u, bool& mirrored) {
  if (u < 1.0 / 3.0) {
    const double y = u * (1.0 + std::sqrt(3.0) * std::sqrt(u));
    if (y > 0.5) {
      u = 1.0 - y;
      mirrored = !mirrored;
    } else {
      u = y;
    }
  } else {
    u = 3.0 * u - 1.0;
  }
}

}  // namespace

TEST_CASE("map_step examples") {
  const auto lsv = MapSystem::lsv(2.0);
  CHECK(map_step(lsv, 0.25) == doctest::Approx(0.4267766953).epsilon(1e-10));
  CHECK(map_step(lsv, 0.75) == 0.5);
  CHECK(map_step(lsv, 0.0) == 0.0);
  CHECK(map_step(MapSystem::lsv(3.5), 0.0) == 0.0);
  CHECK(map_step(MapSystem::afn(1.5), 0.25) == doctest::Approx(0.4375).epsilon(1e-14));
  CHECK(map_step(MapSystem::double_neutral(), 0.9) ==
        doctest::Approx(1.0 - 0.1 * (1.0 + std::sqrt(3.0) * std::sqrt(0.1))).epsilon(1e-14));
  CHECK(map_step(MapSystem::double_neutral(), 0.9) == doctest::Approx(0.8452277443).epsilon(1e-10));
}

TEST_CASE("map_step rejects points outside [0,1]") {
  CHECK_THROWS_AS(map_step(MapSystem::lsv(2.0), -0.1), DomainError);
  CHECK_THROWS_AS(map_step(MapSystem::lsv(2.0), 1.5), DomainError);
  CHECK_THROWS_AS(map_step(MapSystem::lsv(2.0), std::nan("")), DomainError);
}

TEST_CASE("LSV branch surjectivity near 1/2") {
  const double y = map_step(MapSystem::lsv(2.0), 0.5 - 1e-12);
  CHECK(y > 1.0 - 5e-12);
  CHECK(y < 1.0);
}

TEST_CASE("LSV neutral drift law") {
  for (double alpha : {2.0, 3.0}) {
    const auto s = MapSystem::lsv(alpha);
    const double target = std::pow(2.0, 1.0 / alpha);
    for (int k = 3; k <= 9; ++k) {
      const double x = std::pow(10.0, -k);
      const double drift = (map_step(s, x) - x) / std::pow(x, 1.0 + 1.0 / alpha);
      if (k == 9) CHECK(std::abs(drift / target - 1.0) <= 1e-2);
    }
  }
}

TEST_CASE("double-neutral symmetry and fixed points") {
  const auto dn = MapSystem::double_neutral();
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double x = i / 10000.0;
    worst = std::max(worst, std::abs(map_step(dn, 1.0 - x) - (1.0 - map_step(dn, x))));
  }
  CHECK(worst <= 1e-14);
  CHECK(map_step(dn, 0.0) == 0.0);
  CHECK(map_step(dn, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(map_step(dn, 1.0) == 1.0);
}

TEST_CASE("AFN is continuous and increasing before reduction") {
  const auto afn = MapSystem::afn(1.0);
  CHECK(map_step(afn, 0.0) == 0.0);
  double prev = 0.0;
  for (int i = 1; i < 1000; ++i) {
    const double x = i / 1000.0;
    const double lifted = x + 1.0 * x * std::sqrt(x);
    CHECK(lifted > prev);
    prev = lifted;
  }
}

TEST_CASE("observable_eval examples") {
  const auto c2 = ObservableSpec::cos_mode(2);  // cos(2 pi x)
  CHECK(observable_eval(c2, 0.0) == doctest::Approx(1.0));
  CHECK(c2.raw_at_zero() == doctest::Approx(1.0));
  const auto s2 = ObservableSpec::sin_mode(2);
  CHECK(observable_eval(s2, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s2.raw_at_zero() == 0.0);
  const auto c1 = ObservableSpec::cos_mode(1);  // cos(pi x)
  CHECK(c1.raw_at_zero() == doctest::Approx(1.0));
  CHECK(c1.raw_at_one() == doctest::Approx(-1.0));
  ObservableSpec mixed(0.5, {1.0, 0.0, 2.0}, {0.0, -1.0});
  const double x = 0.3;
  const double pi = std::acos(-1.0);
  CHECK(observable_eval(mixed, x) ==
        doctest::Approx(0.5 + std::cos(pi * x) + 2.0 * std::cos(3 * pi * x) -
                        std::sin(2 * pi * x)));
}

TEST_CASE("centering shifts values and boundary values") {
  ObservableSpec v(1.0, {1.0}, {});
  CalibrationInfo info;
  info.exact = true;
  v.set_centering(0.25, info);
  CHECK(v(0.0) == doctest::Approx(1.75));
  CHECK(v.at_zero() == doctest::Approx(1.75));
  CHECK(v.at_one() == doctest::Approx(-0.25));
  v.clear_centering();
  CHECK(v(0.0) == doctest::Approx(2.0));
}

TEST_CASE("centering budget") {
  CHECK(centering_budget(1'000'000) ==
        doctest::Approx(0.1 * std::sqrt(std::log(1e6) / 1e6)).epsilon(1e-14));
  CHECK_THROWS_AS(centering_budget(2), DomainError);
}

TEST_CASE("orbit_birkhoff simple cases") {
  const auto lsv = MapSystem::lsv(2.0);
  const auto one = ObservableSpec::constant(1.0);
  CHECK(orbit_birkhoff(lsv, one, 0.3, 100).sum == 100.0);
  const auto v = ObservableSpec::cos_mode(2, 3.0);
  const auto r = orbit_birkhoff(lsv, v, 0.0, 50);
  CHECK(r.final_point == 0.0);
  CHECK(r.sum == doctest::Approx(50 * 3.0));
  CHECK_THROWS_AS(orbit_birkhoff(lsv, one, 0.3, 0), DomainError);
}

TEST_CASE("orbit_birkhoff matches a naive stepping oracle") {
  const ObservableSpec v(0.2, {1.0, -0.5}, {0.0, 0.7});
  RngStream rng = rng_stream(5, 0);
  for (const auto& sys : {MapSystem::lsv(2.0), MapSystem::afn(1.0), MapSystem::afn(2.0)}) {
    for (int trial = 0; trial < 20; ++trial) {
      const double x0 = rng.uniform();
      double x = x0, sum = 0.0, max_abs = 0.0;
      for (int j = 0; j < 1000; ++j) {
        sum += observable_eval(v, x);
        max_abs = std::max(max_abs, std::abs(sum));
        x = map_step(sys, x);
      }
      const auto r = orbit_birkhoff(sys, v, x0, 1000);
      CHECK(r.final_point == x);
      // The oracle sums naively; allow its rounding error over 1000 terms.
      CHECK(std::abs(r.sum - sum) <= 1e-13 * 1000 * std::max(1.0, max_abs));
      CHECK(std::abs(r.max_abs_partial - max_abs) <= 1e-13 * 1000 * std::max(1.0, max_abs));
    }
  }
  const auto dn = MapSystem::double_neutral();
  for (int trial = 0; trial < 20; ++trial) {
    const double x0 = rng.uniform();
    bool mirrored = x0 > 0.5;
    double u = mirrored ? 1.0 - x0 : x0, sum = 0.0;
    for (int j = 0; j < 1000; ++j) {
      sum += observable_eval(v, mirrored ? 1.0 - u : u);
      dn_folded_step(u, mirrored);
    }
    const auto r = orbit_birkhoff(dn, v, x0, 1000);
    CHECK(r.final_point == (mirrored ? 1.0 - u : u));
    CHECK(std::abs(r.sum - sum) <= 1e-12);
  }
}

TEST_CASE("folded double-neutral orbit agrees with map_step over short horizons") {
  const auto dn = MapSystem::double_neutral();
  RngStream rng = rng_stream(6, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const double x0 = rng.uniform();
    Orbit o(dn, x0);
    double x = x0;
    for (int j = 0; j < 5; ++j) {
      o.advance();
      x = map_step(dn, x);
    }
    CHECK(std::abs(o.x() - x) <= 1e-12);
  }
}

TEST_CASE("orbit_birkhoff is bitwise reproducible") {
  const auto v = ObservableSpec::cos_mode(1);
  const auto a = orbit_birkhoff(MapSystem::double_neutral(), v, 0.123, 100000);
  const auto b = orbit_birkhoff(MapSystem::double_neutral(), v, 0.123, 100000);
  CHECK(std::memcmp(&a.sum, &b.sum, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.final_point, &b.final_point, sizeof(double)) == 0);
}

TEST_CASE("base sets and cells") {
  const auto lsv = MapSystem::lsv(2.0);
  CHECK(lsv.in_base(0.5));
  CHECK(lsv.in_base(1.0));
  CHECK_FALSE(lsv.in_base(0.49));
  const auto dn = MapSystem::double_neutral();
  CHECK(dn.in_base(0.4));
  CHECK_FALSE(dn.in_base(0.3));
  CHECK_FALSE(dn.in_base(0.7));
  Orbit left(dn, 0.4), right(dn, 0.6);
  CHECK(left.base_cell() == 1);
  CHECK(right.base_cell() == -1);
}

TEST_CASE("ergodic average of an odd observable on the double-neutral map is near zero") {
  const auto r = ergodic_average(MapSystem::double_neutral(), ObservableSpec::cos_mode(1), 0.3141,
                                 1000, 2'000'000);
  CHECK(std::abs(r.mean) <= 5.0 * r.std_error + 0.02);
}
