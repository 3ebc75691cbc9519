#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

namespace nswip {

/// Neumaier (improved Kahan-Babuska) compensated accumulator.
///
/// The state is carried explicitly so a long sum split into chunks gives
/// bit-identical results to a single pass.
class CompensatedSum {
 public:
  constexpr CompensatedSum() = default;
  constexpr explicit CompensatedSum(double initial) : sum_(initial) {}

  constexpr void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  constexpr CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }

  constexpr double value() const noexcept { return sum_ + comp_; }
  constexpr double raw_sum() const noexcept { return sum_; }
  constexpr double compensation() const noexcept { return comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Sum with a fixed binary tree shape determined only by the length of the
/// input, so the result does not depend on how the values were produced.
double tree_sum(std::span<const double> values) noexcept;

/// Mean via tree_sum; returns 0 for empty input.
double tree_mean(std::span<const double> values) noexcept;

/// 8-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre8 {
  static constexpr std::array<double, 8> nodes = {
      -0.9602898564975362316835609, -0.7966664774136267395915539,
      -0.5255324099163289858177390, -0.1834346424956498049394761,
      0.1834346424956498049394761,  0.5255324099163289858177390,
      0.7966664774136267395915539,  0.9602898564975362316835609};
  static constexpr std::array<double, 8> weights = {
      0.1012285362903762591525314, 0.2223810344533744705443560,
      0.3137066458778872873379622, 0.3626837833783619829651504,
      0.3626837833783619829651504, 0.3137066458778872873379622,
      0.2223810344533744705443560, 0.1012285362903762591525314};

  /// Integral of f over [a, b].
  template <class F>
  static double integrate(F&& f, double a, double b) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      acc += weights[i] * f(mid + half * nodes[i]);
    }
    return acc * half;
  }
};

}  // namespace nswip
