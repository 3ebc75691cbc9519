#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nswip/dynamics.hpp"

namespace nswip {

enum class Normalization { Standard, Nonstandard };

const char* to_string(Normalization mode) noexcept;
Normalization parse_normalization(const std::string& name);

/// a_n = n^{1/2} (standard, n >= 2) or (n ln n)^{1/2} (nonstandard, n >= 3).
double normalizer(std::uint64_t n, Normalization mode);
/// Same formula for a real time horizon (flows); T must exceed the same minimum.
double normalizer(double t, Normalization mode);

// --- induced observables -------------------------------------------------

/// Sum of explicit orbit values.
double induced_sum(std::span<const double> values) noexcept;
/// max over 0 <= l <= R of |sum_{k<l} values[k]|.
double max_partial_sum(std::span<const double> values) noexcept;

/// First return time of y in Y; throws RunawayExcursion past `cap`.
std::uint64_t return_time(const MapSystem& system, double y,
                          std::uint64_t cap = 100'000'000ULL);

/// V(y) = sum_{l<R} v(f^l y), compensated.
double induced_sum(const MapSystem& system, const ObservableSpec& obs, double y,
                   std::uint64_t R);
/// max over 0 <= l <= R of |sum_{k<l} v(f^k y)|.
double max_partial_sum(const MapSystem& system, const ObservableSpec& obs, double y,
                       std::uint64_t R);

/// One excursion of an interval map from the base back to the base.
struct MapExcursion {
  std::uint64_t R = 0;
  double V = 0.0;
  double max_partial = 0.0;
  /// Orbit::base_cell() at departure.
  int cell = 1;
};

/// Runs one excursion from the orbit's current point (which must be in Y)
/// and leaves the orbit at the next base point.
MapExcursion next_excursion(Orbit& orbit, const ObservableSpec& obs,
                            std::uint64_t cap = 100'000'000ULL);

/// Flow version of the max partial sum: flights with integrals I_0..I_{R-1},
/// maximum of |prefix| over flight endpoints (exact when the observable is
/// monotone along each flight, in particular constant along flights).
double flow_max_partial_sum(std::span<const double> flight_integrals) noexcept;

// --- lap numbers -----------------------------------------------------------

/// N_t = max{ n >= 0 : r_0 + ... + r_{n-1} <= u + t }.
/// Throws DomainError if the roof sequence is exhausted while its total is still
/// below u + t (a total of exactly u + t settles N_t = roofs.size()).
std::uint64_t lap_number(std::span<const double> roofs, double u, double t);
/// psi_n(t) = N_{nt} / n.
double lap_fraction(std::span<const double> roofs, double u, double t, std::uint64_t n);

// --- path processes --------------------------------------------------------

/// W_n on the grid t = j/n, linearly interpolated in between.
class PathSample {
 public:
  PathSample(std::uint64_t n, Normalization mode, std::vector<double> grid);

  std::uint64_t n() const noexcept { return n_; }
  Normalization mode() const noexcept { return mode_; }
  const std::vector<double>& grid() const noexcept { return grid_; }

  /// W_n(t) for t in [0, 1].
  double operator()(double t) const;
  double sup() const noexcept;
  double sup_abs() const noexcept;

 private:
  std::uint64_t n_;
  Normalization mode_;
  std::vector<double> grid_;
};

/// Map mode: W_n(j/n) = a_n^{-1} (x_0 + ... + x_{j-1}) for centered increments.
/// Throws DomainError if fewer than n increments are supplied.
PathSample path_process(std::span<const double> increments, std::uint64_t n,
                        Normalization mode);

/// One flight of a suspension: its duration and partial integral
/// tau -> int_0^tau v ds for tau in [0, duration].
struct Flight {
  double duration = 0.0;
  std::function<double(double)> partial;
};

/// Flow mode: W_n(j/n) = a_n^{-1} v_j with v_t = int_u^{u+t} v(g_s) ds,
/// starting at offset u inside the first flight; the last flight is
/// integrated exactly to the grid time. Throws DomainError if the flights
/// do not cover time u + n.
PathSample flow_path_process(std::span<const Flight> flights, double u, std::uint64_t n,
                             Normalization mode);

// --- decomposition V = K + H -----------------------------------------------

/// K = sum_i c_i R 1_{A_i}; residual budget C (n_slide) + C R^{1-delta}.
struct InducedDecomposition {
  std::vector<double> cell_coefficients{0.0};
  double delta = 0.1;
  double quantile = 0.9999;
  /// Include n_slide in the residual bound (stadium).
  bool slide_term = false;
  /// Maximal allowed log-log growth of the binned residual ratio in R.
  double growth_tolerance = 0.05;
};

struct DecompositionSample {
  std::uint64_t R = 0;
  double V = 0.0;
  std::size_t cell = 0;
  std::uint64_t n_slide = 0;
};

struct DecompositionReport {
  std::size_t count = 0;
  /// Quantile-fitted constant C.
  double C = 0.0;
  double max_ratio = 0.0;
  double max_abs_residual = 0.0;
  /// Log-log slope of the binned 90% ratio quantile against R.
  double growth_slope = 0.0;
  std::size_t bins_used = 0;
  bool pass = false;
};

/// Fits C at the configured quantile and checks that |V - K| / bound does
/// not grow with R. Throws DomainError for an empty sample.
DecompositionReport decomposition_check(std::span<const DecompositionSample> samples,
                                        const InducedDecomposition& decomp);

}  // namespace nswip
