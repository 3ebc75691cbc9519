#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nswip/numeric.hpp"

namespace nswip {

enum class MapKind { Lsv, DoubleNeutral, Afn };

/// One of the intermittent interval maps on X = [0, 1].
///
///   Lsv(alpha):     x(1 + 2^{1/alpha} x^{1/alpha}) on [0, 1/2), 2x - 1 on [1/2, 1]
///   DoubleNeutral:  x(1 + sqrt3 x^{1/2}) on [0, 1/3), 3x - 1 on [1/3, 2/3),
///                   1 - (1-x)(1 + sqrt3 (1-x)^{1/2}) on [2/3, 1]
///   Afn(b):         x + b x^{3/2} mod 1, b in [1, 2]
///
/// Each system also carries its return base Y = [base_lo, base_hi].
class MapSystem {
 public:
  static MapSystem lsv(double alpha);
  static MapSystem double_neutral();
  static MapSystem afn(double b);

  MapKind kind() const noexcept { return kind_; }
  double alpha() const noexcept { return alpha_; }
  double b() const noexcept { return b_; }
  std::string name() const;

  double base_lo() const noexcept { return base_lo_; }
  double base_hi() const noexcept { return base_hi_; }
  bool in_base(double x) const noexcept { return x >= base_lo_ && x <= base_hi_; }

  /// Coefficient of the neutral left branch: 2^{1/alpha} (LSV), sqrt3 (DN), b (AFN).
  double neutral_coefficient() const noexcept { return coef_; }

 private:
  MapSystem(MapKind kind, double alpha, double b);

  MapKind kind_;
  double alpha_ = 0.0;
  double b_ = 0.0;
  double coef_ = 0.0;
  double inv_alpha_ = 0.0;
  double base_lo_ = 0.0;
  double base_hi_ = 1.0;

  friend class Orbit;
  friend double map_step(const MapSystem&, double);
};

/// Image of x under the system, using the branch formulas exactly as written.
/// Branch ties go to the left-closed branch. Throws DomainError for non-finite
/// or out-of-range x.
double map_step(const MapSystem& system, double x);

/// Orbit iterator used by every long-run computation.
///
/// For DoubleNeutral the state is stored folded: a coordinate u in [0, 1/2]
/// plus a mirror flag (x = 1 - u when mirrored). The map commutes with
/// x -> 1 - x, so the folded update is exact algebra, and orbits near the
/// neutral point at 1 keep the resolution doubles have near 0. Iterating x
/// directly would freeze orbits once 1 - x < ~1e-11. LSV and AFN store x.
class Orbit {
 public:
  Orbit(const MapSystem& system, double x0);

  double x() const noexcept { return mirrored_ ? 1.0 - u_ : u_; }
  void advance() noexcept;
  bool in_base() const noexcept;

  /// Distance-to-neutral-point cell for the DoubleNeutral base:
  /// +1 if x < 1/2, -1 if x > 1/2, 0 at x = 1/2. Always +1 for LSV/AFN.
  int base_cell() const noexcept;

  const MapSystem& system() const noexcept { return *system_; }

 private:
  const MapSystem* system_;
  double u_;
  bool mirrored_ = false;
};

/// Metadata of an ergodic calibration run for the centering constant.
struct CalibrationInfo {
  std::uint64_t samples = 0;
  std::uint64_t burn_in = 0;
  /// Batch-means standard error of the estimated mean.
  double std_error = std::numeric_limits<double>::quiet_NaN();
  /// Largest path length the calibration was sized for.
  std::uint64_t n_max = 0;
  /// Precision budget 0.1 * sqrt(ln n_max / n_max).
  double budget = std::numeric_limits<double>::quiet_NaN();
  bool exact = false;

  bool within_budget() const noexcept { return exact || std_error <= budget; }
};

/// Centering precision budget for experiments up to path length n_max.
double centering_budget(std::uint64_t n_max);

/// Trigonometric observable
///   v(x) = c0 + sum_m a_m cos(pi m x) + b_m sin(pi m x),  m = 1..M,
/// minus an optional centering constant.
///
/// Frequencies are in units of pi so cos(pi x) (odd about 1/2) is in the
/// family alongside cos(2 pi x) and sin(2 pi x).
class ObservableSpec {
 public:
  ObservableSpec() = default;
  ObservableSpec(double c0, std::vector<double> cos_coeffs,
                 std::vector<double> sin_coeffs);

  static ObservableSpec constant(double c);
  /// amplitude * cos(pi m x)
  static ObservableSpec cos_mode(int m, double amplitude = 1.0);
  /// amplitude * sin(pi m x)
  static ObservableSpec sin_mode(int m, double amplitude = 1.0);

  double raw(double x) const noexcept;
  double operator()(double x) const noexcept { return raw(x) - centering_; }

  double raw_at_zero() const noexcept;
  double raw_at_one() const noexcept;
  /// Centered boundary values v(0) - m, v(1) - m.
  double at_zero() const noexcept { return raw_at_zero() - centering_; }
  double at_one() const noexcept { return raw_at_one() - centering_; }

  double c0() const noexcept { return c0_; }
  const std::vector<double>& cos_coeffs() const noexcept { return cos_; }
  const std::vector<double>& sin_coeffs() const noexcept { return sin_; }

  double centering() const noexcept { return centering_; }
  const CalibrationInfo& calibration() const noexcept { return calibration_; }
  bool is_centered() const noexcept { return centered_; }

  void set_centering(double mean, CalibrationInfo info);
  /// Drop centering (raw evaluation), e.g. for calibration runs.
  void clear_centering() noexcept;

 private:
  double c0_ = 0.0;
  std::vector<double> cos_;
  std::vector<double> sin_;
  double centering_ = 0.0;
  bool centered_ = false;
  CalibrationInfo calibration_{};
};

/// v(x) with centering applied; throws DomainError for non-finite x.
double observable_eval(const ObservableSpec& obs, double x);

/// Running Birkhoff sum with the maximum absolute prefix sum.
/// Feeding the same increments in any chunking gives identical bits.
class BirkhoffAccumulator {
 public:
  void add(double increment) noexcept {
    sum_.add(increment);
    const double s = std::abs(sum_.value());
    if (s > max_abs_) max_abs_ = s;
  }
  double sum() const noexcept { return sum_.value(); }
  double max_abs_partial() const noexcept { return max_abs_; }
  std::uint64_t count() const noexcept { return count_; }
  void tick() noexcept { ++count_; }

 private:
  CompensatedSum sum_;
  double max_abs_ = 0.0;
  std::uint64_t count_ = 0;
};

struct BirkhoffResult {
  double final_point = 0.0;
  double sum = 0.0;
  double max_abs_partial = 0.0;
};

/// Sum of v(f^j x0) for j < n with compensated accumulation.
BirkhoffResult orbit_birkhoff(const MapSystem& system, const ObservableSpec& obs,
                              double x0, std::uint64_t n);

/// Continue an orbit for n steps into an existing accumulator.
void orbit_birkhoff_continue(Orbit& orbit, const ObservableSpec& obs,
                             std::uint64_t n, BirkhoffAccumulator& acc);

/// Ergodic mean of the raw observable over [burn_in, burn_in + n) with a
/// batch-means standard error (32 batches).
struct ErgodicAverage {
  double mean = 0.0;
  double std_error = 0.0;
  double final_point = 0.0;
};
ErgodicAverage ergodic_average(const MapSystem& system, const ObservableSpec& obs,
                               double x0, std::uint64_t burn_in, std::uint64_t n);

}  // namespace nswip
