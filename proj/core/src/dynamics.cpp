#include "nswip/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "nswip/errors.hpp"

namespace nswip {

namespace {

constexpr double kThird = 1.0 / 3.0;
constexpr double kTwoThirds = 2.0 / 3.0;
constexpr double kSqrt3 = std::numbers::sqrt3;

void require_point(double x) {
  if (!std::isfinite(x)) throw DomainError("map_step: non-finite point");
  if (x < 0.0 || x > 1.0) throw DomainError("map_step: point outside [0, 1]");
}

// Largest y in (0, 1) with y + b y^{3/2} = 1.
double afn_base_point(double b) {
  auto f = [b](double y) { return y + b * y * std::sqrt(y) - 1.0; };
  boost::math::tools::eps_tolerance<double> tol(52);
  std::uintmax_t iters = 200;
  auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, 1.0, tol, iters);
  return 0.5 * (lo + hi);
}

inline double lsv_left(double x, double coef, double inv_alpha, bool sqrt_branch) {
  const double root = sqrt_branch ? std::sqrt(x) : std::pow(x, inv_alpha);
  return x * (1.0 + coef * root);
}

}  // namespace

MapSystem::MapSystem(MapKind kind, double alpha, double b)
    : kind_(kind), alpha_(alpha), b_(b) {}

MapSystem MapSystem::lsv(double alpha) {
  if (!std::isfinite(alpha) || alpha <= 1.0) {
    throw DomainError("LSV map requires alpha > 1");
  }
  MapSystem s(MapKind::Lsv, alpha, 0.0);
  s.inv_alpha_ = 1.0 / alpha;
  s.coef_ = std::pow(2.0, s.inv_alpha_);
  s.base_lo_ = 0.5;
  s.base_hi_ = 1.0;
  return s;
}

MapSystem MapSystem::double_neutral() {
  MapSystem s(MapKind::DoubleNeutral, 2.0, 0.0);
  s.inv_alpha_ = 0.5;
  s.coef_ = kSqrt3;
  s.base_lo_ = kThird;
  s.base_hi_ = kTwoThirds;
  return s;
}

MapSystem MapSystem::afn(double b) {
  if (!std::isfinite(b) || b < 1.0 || b > 2.0) {
    throw DomainError("AFN map requires b in [1, 2]");
  }
  MapSystem s(MapKind::Afn, 2.0, b);
  s.inv_alpha_ = 0.5;
  s.coef_ = b;
  s.base_lo_ = afn_base_point(b);
  s.base_hi_ = 1.0;
  return s;
}

std::string MapSystem::name() const {
  std::ostringstream os;
  switch (kind_) {
    case MapKind::Lsv:
      os << "lsv(alpha=" << alpha_ << ")";
      break;
    case MapKind::DoubleNeutral:
      os << "double_neutral";
      break;
    case MapKind::Afn:
      os << "afn(b=" << b_ << ")";
      break;
  }
  return os.str();
}

double map_step(const MapSystem& s, double x) {
  require_point(x);
  switch (s.kind_) {
    case MapKind::Lsv:
      if (x < 0.5) return lsv_left(x, s.coef_, s.inv_alpha_, s.alpha_ == 2.0);
      return 2.0 * x - 1.0;
    case MapKind::DoubleNeutral:
      if (x < kThird) return x * (1.0 + kSqrt3 * std::sqrt(x));
      if (x < kTwoThirds) return 3.0 * x - 1.0;
      {
        const double d = 1.0 - x;
        return 1.0 - d * (1.0 + kSqrt3 * std::sqrt(d));
      }
    case MapKind::Afn: {
      // x + b x^{3/2} lies in [0, 1 + b]; subtract its integer part.
      const double y = x + s.b_ * x * std::sqrt(x);
      return y - std::floor(y);
    }
  }
  return x;
}

// ---------------------------------------------------------------------------

Orbit::Orbit(const MapSystem& system, double x0) : system_(&system), u_(x0) {
  require_point(x0);
  if (system.kind() == MapKind::DoubleNeutral && x0 > 0.5) {
    u_ = 1.0 - x0;
    mirrored_ = true;
  }
}

void Orbit::advance() noexcept {
  const MapSystem& s = *system_;
  switch (s.kind_) {
    case MapKind::Lsv:
      u_ = u_ < 0.5 ? lsv_left(u_, s.coef_, s.inv_alpha_, s.alpha_ == 2.0)
                    : 2.0 * u_ - 1.0;
      return;
    case MapKind::DoubleNeutral:
      // Folded map on [0, 1/2]; the right branch is the mirror image of the
      // left one, so only the flag changes.
      if (u_ < kThird) {
        const double y = u_ * (1.0 + kSqrt3 * std::sqrt(u_));
        if (y > 0.5) {
          u_ = 1.0 - y;
          mirrored_ = !mirrored_;
        } else {
          u_ = y;
        }
      } else {
        u_ = 3.0 * u_ - 1.0;
      }
      return;
    case MapKind::Afn: {
      const double y = u_ + s.b_ * u_ * std::sqrt(u_);
      u_ = y - std::floor(y);
      return;
    }
  }
}

bool Orbit::in_base() const noexcept {
  if (system_->kind() == MapKind::DoubleNeutral) return u_ >= kThird;
  return u_ >= system_->base_lo() && u_ <= system_->base_hi();
}

int Orbit::base_cell() const noexcept {
  if (system_->kind() != MapKind::DoubleNeutral) return 1;
  if (u_ >= 0.5) return 0;
  return mirrored_ ? -1 : 1;
}

// ---------------------------------------------------------------------------

double centering_budget(std::uint64_t n_max) {
  if (n_max < 3) throw DomainError("centering budget needs n_max >= 3");
  const double n = static_cast<double>(n_max);
  return 0.1 * std::sqrt(std::log(n) / n);
}

ObservableSpec::ObservableSpec(double c0, std::vector<double> cos_coeffs,
                               std::vector<double> sin_coeffs)
    : c0_(c0), cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::isfinite(c0_) || !std::all_of(cos_.begin(), cos_.end(), finite) ||
      !std::all_of(sin_.begin(), sin_.end(), finite)) {
    throw DomainError("observable coefficients must be finite");
  }
}

ObservableSpec ObservableSpec::constant(double c) { return ObservableSpec(c, {}, {}); }

ObservableSpec ObservableSpec::cos_mode(int m, double amplitude) {
  if (m < 1) throw DomainError("frequency index must be >= 1");
  std::vector<double> c(static_cast<std::size_t>(m), 0.0);
  c.back() = amplitude;
  return ObservableSpec(0.0, std::move(c), {});
}

ObservableSpec ObservableSpec::sin_mode(int m, double amplitude) {
  if (m < 1) throw DomainError("frequency index must be >= 1");
  std::vector<double> s(static_cast<std::size_t>(m), 0.0);
  s.back() = amplitude;
  return ObservableSpec(0.0, {}, std::move(s));
}

double ObservableSpec::raw(double x) const noexcept {
  const std::size_t terms = std::max(cos_.size(), sin_.size());
  if (terms == 0) return c0_;
  const double theta = std::numbers::pi * x;
  const double c1 = std::cos(theta);
  const double s1 = std::sin(theta);
  double acc = c0_;
  // Angle-addition recurrence for cos(m theta), sin(m theta).
  double cm = c1;
  double sm = s1;
  for (std::size_t m = 0; m < terms; ++m) {
    if (m > 0) {
      const double cn = cm * c1 - sm * s1;
      const double sn = sm * c1 + cm * s1;
      cm = cn;
      sm = sn;
    }
    if (m < cos_.size()) acc += cos_[m] * cm;
    if (m < sin_.size()) acc += sin_[m] * sm;
  }
  return acc;
}

double ObservableSpec::raw_at_zero() const noexcept {
  double acc = c0_;
  for (double a : cos_) acc += a;
  return acc;
}

double ObservableSpec::raw_at_one() const noexcept {
  double acc = c0_;
  for (std::size_t m = 0; m < cos_.size(); ++m) {
    acc += (m % 2 == 0) ? -cos_[m] : cos_[m];  // cos(pi (m+1)) = (-1)^{m+1}
  }
  return acc;
}

void ObservableSpec::set_centering(double mean, CalibrationInfo info) {
  if (!std::isfinite(mean)) throw DomainError("centering constant must be finite");
  centering_ = mean;
  centered_ = true;
  calibration_ = info;
}

void ObservableSpec::clear_centering() noexcept {
  centering_ = 0.0;
  centered_ = false;
  calibration_ = {};
}

double observable_eval(const ObservableSpec& obs, double x) {
  if (!std::isfinite(x)) throw DomainError("observable_eval: non-finite point");
  return obs(x);
}

// ---------------------------------------------------------------------------

void orbit_birkhoff_continue(Orbit& orbit, const ObservableSpec& obs,
                             std::uint64_t n, BirkhoffAccumulator& acc) {
  for (std::uint64_t j = 0; j < n; ++j) {
    acc.add(obs(orbit.x()));
    acc.tick();
    orbit.advance();
  }
}

BirkhoffResult orbit_birkhoff(const MapSystem& system, const ObservableSpec& obs,
                              double x0, std::uint64_t n) {
  if (n < 1) throw DomainError("orbit_birkhoff requires n >= 1");
  Orbit orbit(system, x0);
  BirkhoffAccumulator acc;
  orbit_birkhoff_continue(orbit, obs, n, acc);
  return {orbit.x(), acc.sum(), acc.max_abs_partial()};
}

ErgodicAverage ergodic_average(const MapSystem& system, const ObservableSpec& obs,
                               double x0, std::uint64_t burn_in, std::uint64_t n) {
  constexpr std::uint64_t kBatches = 32;
  if (n < kBatches) throw DomainError("ergodic_average needs n >= 32");
  Orbit orbit(system, x0);
  for (std::uint64_t j = 0; j < burn_in; ++j) orbit.advance();
  std::vector<double> batch_means(kBatches);
  const std::uint64_t per = n / kBatches;
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    const std::uint64_t len = (b + 1 == kBatches) ? n - per * (kBatches - 1) : per;
    CompensatedSum s;
    for (std::uint64_t j = 0; j < len; ++j) {
      s.add(obs.raw(orbit.x()));
      orbit.advance();
    }
    batch_means[b] = s.value() / static_cast<double>(len);
  }
  ErgodicAverage out;
  CompensatedSum total;
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    const std::uint64_t len = (b + 1 == kBatches) ? n - per * (kBatches - 1) : per;
    total.add(batch_means[b] * static_cast<double>(len));
  }
  out.mean = total.value() / static_cast<double>(n);
  double ss = 0.0;
  for (double m : batch_means) ss += (m - out.mean) * (m - out.mean);
  out.std_error = std::sqrt(ss / static_cast<double>(kBatches - 1) /
                            static_cast<double>(kBatches));
  out.final_point = orbit.x();
  return out;
}

}  // namespace nswip
