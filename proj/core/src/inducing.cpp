#include "nswip/inducing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "nswip/errors.hpp"
#include "nswip/numeric.hpp"

namespace nswip {

const char* to_string(Normalization mode) noexcept {
  return mode == Normalization::Standard ? "standard" : "nonstandard";
}

Normalization parse_normalization(const std::string& name) {
  if (name == "standard") return Normalization::Standard;
  if (name == "nonstandard") return Normalization::Nonstandard;
  throw DomainError("unknown normalization '" + name + "'");
}

double normalizer(std::uint64_t n, Normalization mode) {
  if (mode == Normalization::Standard && n < 2) {
    throw DomainError("standard normalization needs n >= 2");
  }
  if (mode == Normalization::Nonstandard && n < 3) {
    throw DomainError("nonstandard normalization needs n >= 3");
  }
  return normalizer(static_cast<double>(n), mode);
}

double normalizer(double t, Normalization mode) {
  const double min_t = mode == Normalization::Standard ? 2.0 : 3.0;
  if (!std::isfinite(t) || t < min_t) {
    throw DomainError("normalizer: horizon below the minimum for this mode");
  }
  return mode == Normalization::Standard ? std::sqrt(t) : std::sqrt(t * std::log(t));
}

// ---------------------------------------------------------------------------

double induced_sum(std::span<const double> values) noexcept {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

double max_partial_sum(std::span<const double> values) noexcept {
  CompensatedSum s;
  double best = 0.0;
  for (double v : values) {
    s.add(v);
    best = std::max(best, std::abs(s.value()));
  }
  return best;
}

std::uint64_t return_time(const MapSystem& system, double y, std::uint64_t cap) {
  if (!system.in_base(y)) throw DomainError("return_time: point not in the base");
  Orbit orbit(system, y);
  std::uint64_t r = 0;
  do {
    orbit.advance();
    ++r;
    if (r > cap) throw RunawayExcursion("return_time: excursion cap exceeded", r);
  } while (!orbit.in_base());
  return r;
}

namespace {

BirkhoffAccumulator run_steps(const MapSystem& system, const ObservableSpec& obs,
                              double y, std::uint64_t R) {
  Orbit orbit(system, y);
  BirkhoffAccumulator acc;
  orbit_birkhoff_continue(orbit, obs, R, acc);
  return acc;
}

}  // namespace

double induced_sum(const MapSystem& system, const ObservableSpec& obs, double y,
                   std::uint64_t R) {
  return run_steps(system, obs, y, R).sum();
}

double max_partial_sum(const MapSystem& system, const ObservableSpec& obs, double y,
                       std::uint64_t R) {
  return run_steps(system, obs, y, R).max_abs_partial();
}

MapExcursion next_excursion(Orbit& orbit, const ObservableSpec& obs, std::uint64_t cap) {
  if (!orbit.in_base()) throw DomainError("next_excursion: orbit not in the base");
  MapExcursion ex;
  ex.cell = orbit.base_cell();
  BirkhoffAccumulator acc;
  do {
    acc.add(obs(orbit.x()));
    orbit.advance();
    ++ex.R;
    if (ex.R > cap) throw RunawayExcursion("next_excursion: excursion cap exceeded", ex.R);
  } while (!orbit.in_base());
  ex.V = acc.sum();
  ex.max_partial = acc.max_abs_partial();
  return ex;
}

double flow_max_partial_sum(std::span<const double> flight_integrals) noexcept {
  return max_partial_sum(flight_integrals);
}

// ---------------------------------------------------------------------------

std::uint64_t lap_number(std::span<const double> roofs, double u, double t) {
  if (!std::isfinite(u) || !std::isfinite(t) || t < 0.0) {
    throw DomainError("lap_number: u and t must be finite, t >= 0");
  }
  const double target = u + t;
  CompensatedSum s;
  for (std::size_t n = 0; n < roofs.size(); ++n) {
    s.add(roofs[n]);
    if (s.value() > target) return n;
  }
  // Roofs are positive, so a prefix ending exactly at u + t settles N.
  if (!roofs.empty() && s.value() == target) return roofs.size();
  throw DomainError("lap_number: roof sequence exhausted");
}

double lap_fraction(std::span<const double> roofs, double u, double t, std::uint64_t n) {
  if (n == 0) throw DomainError("lap_fraction: n must be positive");
  const double nt = static_cast<double>(n) * t;
  return static_cast<double>(lap_number(roofs, u, nt)) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

PathSample::PathSample(std::uint64_t n, Normalization mode, std::vector<double> grid)
    : n_(n), mode_(mode), grid_(std::move(grid)) {
  if (grid_.size() != n + 1) throw DomainError("PathSample: grid must have n + 1 points");
}

double PathSample::operator()(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("PathSample: t outside [0, 1]");
  const double pos = t * static_cast<double>(n_);
  auto j = static_cast<std::uint64_t>(std::floor(pos));
  if (j >= n_) return grid_.back();
  const double frac = pos - static_cast<double>(j);
  return grid_[j] + frac * (grid_[j + 1] - grid_[j]);
}

double PathSample::sup() const noexcept {
  return *std::max_element(grid_.begin(), grid_.end());
}

double PathSample::sup_abs() const noexcept {
  double best = 0.0;
  for (double g : grid_) best = std::max(best, std::abs(g));
  return best;
}

PathSample path_process(std::span<const double> increments, std::uint64_t n,
                        Normalization mode) {
  if (increments.size() < n) throw DomainError("path_process: too few increments");
  const double a = normalizer(n, mode);
  std::vector<double> grid(n + 1);
  CompensatedSum s;
  grid[0] = 0.0;
  for (std::uint64_t j = 0; j < n; ++j) {
    s.add(increments[j]);
    grid[j + 1] = s.value() / a;
  }
  return PathSample(n, mode, std::move(grid));
}

PathSample flow_path_process(std::span<const Flight> flights, double u, std::uint64_t n,
                             Normalization mode) {
  if (flights.empty()) throw DomainError("flow_path_process: no flights");
  if (!(u >= 0.0 && u <= flights[0].duration)) {
    throw DomainError("flow_path_process: offset outside the first flight");
  }
  const double a = normalizer(n, mode);
  std::vector<double> grid(n + 1, 0.0);

  // Completed-flight integral so far, and the flight interval [start, end)
  // in time measured from the starting point.
  CompensatedSum done;
  std::size_t k = 0;
  double local0 = u;  // where integration starts inside flight k
  double start = 0.0;
  double end = flights[0].duration - u;
  double base0 = flights[0].partial(u);

  for (std::uint64_t j = 1; j <= n; ++j) {
    const double t = static_cast<double>(j);
    while (end < t) {
      done.add(flights[k].partial(flights[k].duration) - base0);
      ++k;
      if (k >= flights.size()) {
        throw DomainError("flow_path_process: flights do not cover the horizon");
      }
      start = end;
      end = start + flights[k].duration;
      local0 = 0.0;
      base0 = flights[k].partial(0.0);
    }
    const double tau = local0 + (t - start);
    grid[j] = (done.value() + flights[k].partial(tau) - base0) / a;
  }
  return PathSample(n, mode, std::move(grid));
}

// ---------------------------------------------------------------------------

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

DecompositionReport decomposition_check(std::span<const DecompositionSample> samples,
                                        const InducedDecomposition& decomp) {
  if (samples.empty()) throw DomainError("decomposition_check: empty sample");
  constexpr std::size_t kMinBin = 10;
  DecompositionReport rep;
  rep.count = samples.size();

  std::vector<double> ratios;
  ratios.reserve(samples.size());
  // Ratios binned by floor(log2 R).
  std::map<int, std::vector<double>> bins;
  std::map<int, double> bin_log_r;
  for (const auto& s : samples) {
    if (s.R == 0) throw DomainError("decomposition_check: return time must be >= 1");
    if (s.cell >= decomp.cell_coefficients.size()) {
      throw DomainError("decomposition_check: cell index out of range");
    }
    const double R = static_cast<double>(s.R);
    const double K = decomp.cell_coefficients[s.cell] * R;
    const double res = std::abs(s.V - K);
    double bound = std::pow(R, 1.0 - decomp.delta);
    if (decomp.slide_term) bound += static_cast<double>(s.n_slide);
    const double ratio = res / bound;
    ratios.push_back(ratio);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    rep.max_abs_residual = std::max(rep.max_abs_residual, res);
    const int b = static_cast<int>(std::floor(std::log2(R)));
    bins[b].push_back(ratio);
    bin_log_r[b] += std::log(R);
  }
  std::sort(ratios.begin(), ratios.end());
  rep.C = quantile_sorted(ratios, decomp.quantile);

  std::vector<double> xs, ys;
  for (auto& [b, vals] : bins) {
    if (vals.size() < kMinBin) continue;
    std::sort(vals.begin(), vals.end());
    const double q = quantile_sorted(vals, 0.9);
    if (!(q > 0.0)) continue;
    xs.push_back(bin_log_r[b] / static_cast<double>(vals.size()));
    ys.push_back(std::log(q));
  }
  rep.bins_used = xs.size();
  if (xs.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    rep.growth_slope = sxx > 0.0 ? sxy / sxx : 0.0;
  }
  rep.pass = std::isfinite(rep.C) && rep.growth_slope <= decomp.growth_tolerance;
  return rep;
}

}  // namespace nswip
