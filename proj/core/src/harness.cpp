#include "nswip/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "nswip/gibbs_markov.hpp"
#include "nswip/inducing.hpp"
#include "nswip/numeric.hpp"
#include "nswip/rng.hpp"
#include "nswip/stats.hpp"

namespace nswip {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Stream-index offsets keep the phases of one experiment on disjoint substreams.
constexpr std::uint64_t kReturnStreams = 1ULL << 62;
constexpr std::uint64_t kCalibrationStreams = 1ULL << 61;
constexpr std::uint64_t kGeometryStreams = 1ULL << 60;
constexpr std::uint64_t kSpreadStreams = 1ULL << 59;
constexpr std::size_t kPlotPoints = 256;
constexpr std::size_t kMaxPlotMarks = 400;

// ---------------------------------------------------------------------------
// Runner

Runner::Runner(RunOptions options, std::uint64_t config_hash)
    : opt_(std::move(options)), hash_(config_hash) {
  if (opt_.workers < 1) opt_.workers = 1;
  state_ = Json{{"version", kCheckpointVersion},
                {"config_hash", hash_},
                {"phases", Json::object()}};
  if (!opt_.checkpoint_path.empty() && std::filesystem::exists(opt_.checkpoint_path)) load();
}

void Runner::load() {
  std::ifstream in(opt_.checkpoint_path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + opt_.checkpoint_path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError("corrupt checkpoint " + opt_.checkpoint_path.string() + ": " + e.what());
  }
  if (j.value("version", -1) != kCheckpointVersion) {
    throw IoError("checkpoint version mismatch in " + opt_.checkpoint_path.string());
  }
  if (j.value("config_hash", std::uint64_t{0}) != hash_) {
    throw IoError("checkpoint belongs to a different configuration: " +
                  opt_.checkpoint_path.string());
  }
  state_ = std::move(j);
}

void Runner::save() const {
  if (opt_.checkpoint_path.empty()) return;
  const auto tmp = opt_.checkpoint_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out << state_.dump();
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, opt_.checkpoint_path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

void Runner::finish() {
  if (opt_.checkpoint_path.empty()) return;
  std::error_code ec;
  std::filesystem::remove(opt_.checkpoint_path, ec);
}

std::vector<ItemRecord> Runner::run(const std::string& phase, std::size_t count,
                                    const std::function<ItemRecord(std::size_t)>& fn) {
  const auto t0 = Clock::now();
  Json& ph = state_["phases"][phase];
  if (!ph.contains("count") || ph["count"].get<std::size_t>() != count) {
    ph = Json{{"count", count}, {"done", Json::object()}};
  }
  std::vector<std::optional<ItemRecord>> results(count);
  for (auto& [key, rec] : ph["done"].items()) {
    const std::size_t i = std::stoull(key);
    if (i < count) results[i] = rec.get<ItemRecord>();
  }
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < count; ++i) {
    if (!results[i]) pending.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  bool hook_hit = false;
  std::mutex mu;
  std::exception_ptr failure;
  auto last_save = Clock::now();

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) break;
      const std::size_t idx = pending[k];
      ItemRecord rec;
      try {
        rec = fn(idx);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        break;
      }
      std::lock_guard lock(mu);
      ph["done"][std::to_string(idx)] = rec;
      results[idx] = std::move(rec);
      ++computed_;
      if (opt_.stop_after_items && computed_ >= *opt_.stop_after_items) {
        hook_hit = true;
        stop = true;
      }
      const auto now = Clock::now();
      if (!opt_.checkpoint_path.empty() &&
          std::chrono::duration<double>(now - last_save).count() >= opt_.checkpoint_interval) {
        save();
        last_save = now;
      }
      if (opt_.verbose && computed_ % 100 == 0) {
        std::cerr << "[" << phase << "] " << computed_ << " items\n";
      }
    }
  };

  const std::size_t nthreads =
      std::min<std::size_t>(opt_.workers, std::max<std::size_t>(pending.size(), 1));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  if (hook_hit) {
    save();
    throw Interrupted("run stopped by stop_after_items after " + std::to_string(computed_) +
                      " items");
  }
  std::vector<ItemRecord> out;
  out.reserve(count);
  for (auto& r : results) out.push_back(std::move(*r));
  seconds_[phase] += std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Checks and report

Check check_at_most(std::string name, double value, double hi) {
  return {std::move(name), value, -std::numeric_limits<double>::infinity(), hi,
          std::isfinite(value) && value <= hi};
}

Check check_at_least(std::string name, double value, double lo) {
  return {std::move(name), value, lo, std::numeric_limits<double>::infinity(),
          std::isfinite(value) && value >= lo};
}

Check check_within(std::string name, double value, double lo, double hi) {
  return {std::move(name), value, lo, hi, std::isfinite(value) && value >= lo && value <= hi};
}

bool Report::pass() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

namespace {

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json Report::to_json() const {
  Json checks_json = Json::array();
  for (const auto& c : checks) {
    checks_json.push_back({{"name", c.name},
                           {"value", finite_or_null(c.value)},
                           {"lo", finite_or_null(c.lo)},
                           {"hi", finite_or_null(c.hi)},
                           {"pass", c.pass}});
  }
  Json counters_json = Json::object();
  for (const auto& [k, v] : counters) counters_json[k] = v;
  return Json{{"schema_version", kReportSchemaVersion},
              {"config", config.to_json()},
              {"results", results},
              {"checks", checks_json},
              {"counters", counters_json},
              {"pass", pass()}};
}

// ---------------------------------------------------------------------------
// Calibration records

Json CalibrationRecord::to_json() const {
  return Json{{"schema_version", kReportSchemaVersion},
              {"system", system},
              {"observable", {{"c0", c0}, {"cos", cos}, {"sin", sin}}},
              {"mean", mean},
              {"std_error", info.std_error},
              {"samples", info.samples},
              {"burn_in", info.burn_in},
              {"n_max", info.n_max},
              {"budget", info.budget}};
}

CalibrationRecord CalibrationRecord::from_json(const Json& j) {
  try {
    CalibrationRecord r;
    r.system = j.at("system").get<std::string>();
    r.c0 = j.at("observable").at("c0").get<double>();
    r.cos = j.at("observable").at("cos").get<std::vector<double>>();
    r.sin = j.at("observable").at("sin").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.info.std_error = j.at("std_error").get<double>();
    r.info.samples = j.at("samples").get<std::uint64_t>();
    r.info.burn_in = j.at("burn_in").get<std::uint64_t>();
    r.info.n_max = j.at("n_max").get<std::uint64_t>();
    r.info.budget = j.at("budget").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed calibration record: ") + e.what());
  }
}

ObservableSpec centered_observable(const ExperimentConfig& cfg, const MapSystem& system) {
  ObservableSpec obs = make_observable(cfg.observable);
  const std::string& mode = cfg.observable.centering;
  if (mode == "none") return obs;
  if (mode == "exact") {
    CalibrationInfo info;
    info.exact = true;
    obs.set_centering(cfg.observable.centering_value, info);
    return obs;
  }
  const auto& path = cfg.observable.calibration_file;
  if (path.empty()) {
    throw ConfigError("missing calibration: set observable.calibration_file or run calibrate");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing calibration: cannot read " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("malformed calibration file " + path + ": " + e.what());
  }
  const CalibrationRecord rec = CalibrationRecord::from_json(j);
  if (rec.system != system.name() || rec.c0 != cfg.observable.c0 ||
      rec.cos != cfg.observable.cos || rec.sin != cfg.observable.sin) {
    throw ConfigError("calibration record " + path + " is for a different system or observable");
  }
  obs.set_centering(rec.mean, rec.info);
  return obs;
}

// ---------------------------------------------------------------------------
// Return statistics

VariancePrediction predict_variance(const ReturnSample& returns,
                                    std::span<const double> coefficients, std::size_t cells,
                                    std::uint64_t block) {
  if (returns.R.size() < 4) throw DomainError("predict_variance: too few returns");
  if (coefficients.size() != cells) throw DomainError("predict_variance: coefficient count");
  if (block < 1) throw DomainError("predict_variance: block must be >= 1");
  VariancePrediction p;
  p.mean_return = tree_mean(returns.R);
  p.block = block;
  const EmpiricalDistribution dist(returns.R);
  const TailConstant tc = tail_constant_index2(dist, true);
  p.tail_constant = tc.c;
  if (block == 1) {
    p.sigma_R2 = tc.c;
  } else {
    std::vector<std::size_t> starts = returns.run_starts;
    if (starts.empty()) starts.push_back(0);
    std::vector<double> sums;
    const double w = static_cast<double>(block);
    for (std::size_t r = 0; r < starts.size(); ++r) {
      const std::size_t end = r + 1 < starts.size() ? starts[r + 1] : returns.R.size();
      for (std::size_t i = starts[r]; i + block <= end; i += block) {
        CompensatedSum s;
        for (std::size_t j = i; j < i + block; ++j) s.add(returns.R[j]);
        sums.push_back(s.value() - w * p.mean_return);
      }
    }
    if (sums.size() < 4) throw DomainError("predict_variance: too few blocks");
    p.sigma_R2 = tail_constant_index2(EmpiricalDistribution(std::move(sums)), false).c / w;
  }
  p.coefficients.assign(coefficients.begin(), coefficients.end());
  // Split sigma_R^2 by the cell of the marginal exceedances.
  const double cut = dist.sorted()[dist.size() - tc.k - 1];
  std::vector<double> counts(cells, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < returns.R.size(); ++i) {
    if (returns.R[i] > cut) {
      counts[returns.cell.empty() ? 0 : returns.cell[i]] += 1.0;
      total += 1.0;
    }
  }
  p.cell_tail_constants.resize(cells);
  double s = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    p.cell_tail_constants[c] = total > 0.0 ? p.sigma_R2 * counts[c] / total : 0.0;
    s += coefficients[c] * coefficients[c] * p.cell_tail_constants[c];
  }
  p.sigma2 = s / p.mean_return;
  return p;
}

double tail_clustering(const ReturnSample& returns) {
  const std::size_t m = returns.R.size();
  if (m < 4) throw DomainError("tail_clustering: too few returns");
  const EmpiricalDistribution dist(returns.R);
  const TailConstant tc = tail_constant_index2(dist, true);
  const double cut = dist.sorted()[m - tc.k - 1];
  std::vector<bool> last(m, false);
  for (std::size_t r = 0; r < returns.run_starts.size(); ++r) {
    const std::size_t end = r + 1 < returns.run_starts.size() ? returns.run_starts[r + 1] : m;
    if (end > 0) last[end - 1] = true;
  }
  last[m - 1] = true;
  double big = 0.0, both = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (last[i] || returns.R[i] <= cut) continue;
    big += 1.0;
    if (returns.R[i + 1] > cut) both += 1.0;
  }
  return big > 0.0 ? both / big : 0.0;
}

namespace {

// ---------------------------------------------------------------------------
// Path walker: accumulates one trajectory and captures what the ensemble needs.

constexpr std::size_t kPerN = 7;  // W1, max_partial, R_count, W.25, W.5, W.75, sup
constexpr double kQuarter[3] = {0.25, 0.5, 0.75};

struct PathPlan {
  std::vector<std::uint64_t> grid;
  std::vector<double> a;
  std::uint64_t n_max = 0;
  /// Sorted unique step indices at which S_j is captured.
  std::vector<std::uint64_t> capture;
  std::vector<std::uint64_t> plot_capture;
};

PathPlan make_plan(const std::vector<std::uint64_t>& grid, Normalization mode) {
  PathPlan p;
  p.grid = grid;
  p.n_max = grid.back();
  for (auto n : grid) {
    p.a.push_back(normalizer(n, mode));
    for (double t : kQuarter) {
      const double pos = t * static_cast<double>(n);
      const auto k = static_cast<std::uint64_t>(std::floor(pos));
      p.capture.push_back(k);
      if (pos > static_cast<double>(k)) p.capture.push_back(k + 1);
    }
  }
  std::sort(p.capture.begin(), p.capture.end());
  p.capture.erase(std::unique(p.capture.begin(), p.capture.end()), p.capture.end());
  for (std::size_t m = 0; m <= kPlotPoints; ++m) {
    p.plot_capture.push_back(m * p.n_max / kPlotPoints);
  }
  return p;
}

class PathWalker {
 public:
  PathWalker(const PathPlan& plan, bool plot)
      : plan_(plan), plot_(plot), captured_(plan.capture.size(), 0.0),
        per_n_(plan.grid.size() * kPerN, 0.0) {
    if (plot_) plot_vals_.reserve(kPlotPoints + 1);
    advance_captures(0.0);
  }

  bool done() const noexcept { return g_ >= plan_.grid.size(); }
  std::uint64_t steps() const noexcept { return j_; }
  double sum() const noexcept { return s_.value(); }

  /// One increment; `returns` is the return counter after this step.
  void step(double inc, std::uint64_t returns) {
    s_.add(inc);
    ++j_;
    const double s = s_.value();
    sup_ = std::max(sup_, s);
    max_abs_ = std::max(max_abs_, std::abs(s));
    advance_captures(s);
    while (g_ < plan_.grid.size() && plan_.grid[g_] == j_) {
      double* r = &per_n_[g_ * kPerN];
      const double a = plan_.a[g_];
      r[0] = s / a;
      r[1] = max_abs_ / a;
      r[2] = static_cast<double>(returns);
      r[6] = sup_ / a;
      ++g_;
    }
  }

  /// Fill the quarter-point values once the walk is complete.
  ItemRecord finish() const {
    ItemRecord out = per_n_;
    for (std::size_t g = 0; g < plan_.grid.size(); ++g) {
      const double n = static_cast<double>(plan_.grid[g]);
      for (int q = 0; q < 3; ++q) {
        const double pos = kQuarter[q] * n;
        const auto k = static_cast<std::uint64_t>(std::floor(pos));
        const double f = pos - static_cast<double>(k);
        double v = at(k);
        if (f > 0.0) v += f * (at(k + 1) - v);
        out[g * kPerN + 3 + static_cast<std::size_t>(q)] = v / plan_.a[g];
      }
    }
    return out;
  }

  const std::vector<double>& plot_values() const noexcept { return plot_vals_; }

 private:
  void advance_captures(double s) {
    while (c_ < plan_.capture.size() && plan_.capture[c_] == j_) captured_[c_++] = s;
    if (plot_) {
      while (p_ < plan_.plot_capture.size() && plan_.plot_capture[p_] == j_) {
        plot_vals_.push_back(s / plan_.a.back());
        ++p_;
      }
    }
  }

  double at(std::uint64_t k) const {
    const auto it = std::lower_bound(plan_.capture.begin(), plan_.capture.end(), k);
    return captured_[static_cast<std::size_t>(it - plan_.capture.begin())];
  }

  const PathPlan& plan_;
  bool plot_;
  CompensatedSum s_;
  std::uint64_t j_ = 0;
  double sup_ = 0.0;
  double max_abs_ = 0.0;
  std::size_t c_ = 0;
  std::size_t p_ = 0;
  std::size_t g_ = 0;
  std::vector<double> captured_;
  std::vector<double> per_n_;
  std::vector<double> plot_vals_;
};

// ---------------------------------------------------------------------------
// System contexts

struct StadiumContext {
  StadiumGeometry geom;
  SectionObservable section;
  std::optional<FlowObservable> flow;

  explicit StadiumContext(const ExperimentConfig& cfg) : geom(cfg.system.length) {
    try {
      section = SectionObservable::from_name(cfg.observable.section);
      if (cfg.observable.flow != "none") flow = FlowObservable::from_name(cfg.observable.flow);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    const auto m = section.exact_mean(geom);
    if (!m) throw ConfigError("section observable has no closed-form mean");
    section.set_centering(*m);
    if (flow) {
      const auto fm = flow->exact_mean();
      if (!fm) throw ConfigError("flow observable has no closed-form mean");
      flow->set_centering(*fm);
    }
  }
};

CollisionState advance_to_base(const StadiumGeometry& geom, CollisionState s,
                               std::uint64_t burn_in) {
  for (std::uint64_t j = 0; j < burn_in; ++j) s = next_collision(geom, s).next;
  std::uint64_t guard = 0;
  while (!in_return_base(s)) {
    s = next_collision(geom, s).next;
    if (++guard > kDefaultExcursionCap) {
      throw RunawayExcursion("stadium: no entry into the return base", guard);
    }
  }
  return s;
}

Orbit map_start(const MapSystem& sys, std::uint64_t seed, std::uint64_t stream,
                std::uint64_t burn_in) {
  RngStream rng = rng_stream(seed, stream);
  Orbit orbit(sys, rng.uniform_open());
  for (std::uint64_t j = 0; j < burn_in; ++j) orbit.advance();
  return orbit;
}

std::size_t cell_index(int base_cell) { return base_cell < 0 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Returns phase

constexpr std::size_t kReturnChunks = 64;

ReturnSample collect_returns(const ExperimentConfig& cfg, Runner& runner) {
  const std::uint64_t total = cfg.experiment.returns;
  const std::size_t chunks = static_cast<std::size_t>(
      std::min<std::uint64_t>(kReturnChunks, std::max<std::uint64_t>(total, 1)));
  const std::uint64_t seed = cfg.experiment.seed;
  const std::uint64_t burn = cfg.experiment.burn_in;
  auto chunk_len = [&](std::size_t c) {
    return total / chunks + (c < total % chunks ? 1 : 0);
  };

  std::vector<ItemRecord> recs;
  std::size_t width = 0;
  if (is_interval_map(cfg.system.kind)) {
    const MapSystem sys = make_map_system(cfg.system);
    const ObservableSpec obs = centered_observable(cfg, sys);
    width = 4;
    recs = runner.run("returns", chunks, [&](std::size_t c) {
      Orbit orbit = map_start(sys, seed, kReturnStreams + c, burn);
      std::uint64_t guard = 0;
      while (!orbit.in_base()) {
        orbit.advance();
        if (++guard > 100'000'000ULL) throw RunawayExcursion("no entry into base", guard);
      }
      ItemRecord rec;
      const std::uint64_t len = chunk_len(c);
      rec.reserve(len * 4);
      for (std::uint64_t r = 0; r < len; ++r) {
        const MapExcursion ex = next_excursion(orbit, obs);
        rec.insert(rec.end(), {static_cast<double>(ex.R), ex.V, ex.max_partial,
                               static_cast<double>(cell_index(ex.cell))});
      }
      return rec;
    });
  } else {
    const StadiumContext ctx(cfg);
    width = 5;
    recs = runner.run("returns", chunks, [&](std::size_t c) {
      RngStream rng = rng_stream(seed, kReturnStreams + c);
      CollisionState s = advance_to_base(ctx.geom, liouville_sample(ctx.geom, rng), burn);
      ItemRecord rec;
      const std::uint64_t len = chunk_len(c);
      rec.reserve(len * 5);
      for (std::uint64_t r = 0; r < len; ++r) {
        const ReturnRecord rr = first_return(ctx.geom, s, ctx.section);
        rec.insert(rec.end(), {static_cast<double>(rr.R), rr.V, rr.max_partial,
                               static_cast<double>(rr.n_slide), static_cast<double>(rr.n_seg)});
        s = rr.end;
      }
      return rec;
    });
  }
  ReturnSample out;
  for (const auto& rec : recs) {
    out.run_starts.push_back(out.R.size());
    for (std::size_t i = 0; i + width <= rec.size(); i += width) {
      out.R.push_back(rec[i]);
      out.V.push_back(rec[i + 1]);
      out.max_partial.push_back(rec[i + 2]);
      if (width == 4) {
        out.cell.push_back(static_cast<std::size_t>(rec[i + 3]));
      } else {
        out.cell.push_back(0);
        out.n_slide.push_back(rec[i + 3]);
        out.n_seg.push_back(rec[i + 4]);
      }
    }
  }
  return out;
}

/// Coefficients of the piecewise-constant part K and the number of cells.
std::pair<std::vector<double>, std::size_t> decomposition_cells(const ExperimentConfig& cfg) {
  if (is_interval_map(cfg.system.kind)) {
    const MapSystem sys = make_map_system(cfg.system);
    const ObservableSpec obs = centered_observable(cfg, sys);
    if (cfg.system.kind == SystemKind::DoubleNeutral) {
      return {{obs.at_zero(), obs.at_one()}, 2};
    }
    return {{obs.at_zero()}, 1};
  }
  const StadiumContext ctx(cfg);
  const FlowObservable flow = ctx.flow ? *ctx.flow : FlowObservable::constant(0.0);
  const BoundaryAverages avg = boundary_averages(ctx.geom, ctx.section, flow);
  return {{avg.I_v}, 1};
}

// ---------------------------------------------------------------------------
// Plot helpers

std::vector<std::size_t> thin_indices(std::size_t m, std::size_t max_marks) {
  std::vector<std::size_t> idx;
  if (m == 0) return idx;
  const std::size_t step = std::max<std::size_t>(1, m / max_marks);
  for (std::size_t i = 0; i < m; i += step) idx.push_back(i);
  if (idx.back() != m - 1) idx.push_back(m - 1);
  return idx;
}

Plot ecdf_plot(const std::string& file, const EmpiricalDistribution& dist, double sigma,
               const std::string& what) {
  Plot p;
  p.file = file;
  p.title = "ECDF of " + what + " vs N(0, s^2)";
  p.xlabel = what;
  p.ylabel = "probability";
  PlotSeries emp{"empirical", {}, {}, "step"};
  PlotSeries ref{"gaussian", {}, {}, "line"};
  const auto& s = dist.sorted();
  for (std::size_t i : thin_indices(s.size(), kMaxPlotMarks)) {
    emp.x.push_back(s[i]);
    emp.y.push_back(static_cast<double>(i + 1) / static_cast<double>(s.size()));
  }
  const double lo = s.front(), hi = s.back();
  for (int k = 0; k <= 200; ++k) {
    const double x = lo + (hi - lo) * k / 200.0;
    ref.x.push_back(x);
    ref.y.push_back(gaussian_cdf(x, sigma));
  }
  p.series = {emp, ref};
  return p;
}

Plot qq_plot(const std::string& file, const EmpiricalDistribution& dist, double sigma,
             const std::string& what) {
  Plot p;
  p.file = file;
  p.title = "Normal QQ plot of " + what;
  p.xlabel = "gaussian quantile";
  p.ylabel = "sample quantile";
  const boost::math::normal_distribution<double> nd(0.0, sigma);
  PlotSeries pts{"sample", {}, {}, "points"};
  const auto& s = dist.sorted();
  const double m = static_cast<double>(s.size());
  for (std::size_t i : thin_indices(s.size(), kMaxPlotMarks)) {
    pts.x.push_back(boost::math::quantile(nd, (static_cast<double>(i) + 0.5) / m));
    pts.y.push_back(s[i]);
  }
  const double lo = pts.x.front(), hi = pts.x.back();
  PlotSeries diag{"y = x", {lo, hi}, {lo, hi}, "line"};
  p.series = {pts, diag};
  return p;
}

// ---------------------------------------------------------------------------
// clt / wip

Report run_ensemble(const ExperimentConfig& cfg, Runner& runner) {
  Report rep;
  rep.config = cfg;
  const auto& ex = cfg.experiment;
  const auto tol = effective_tolerances(cfg);
  const PathPlan plan = make_plan(ex.n_grid, ex.mode);
  const std::size_t G = plan.grid.size();
  const bool stadium = cfg.system.kind == SystemKind::Stadium;
  const bool gm = cfg.system.kind == SystemKind::Gm;

  std::optional<StadiumContext> sctx;
  std::optional<MapSystem> msys;
  std::optional<ObservableSpec> mobs;
  std::optional<CountableMarkovModel> model;
  std::vector<double> q_grid;
  if (stadium) {
    sctx.emplace(cfg);
  } else if (gm) {
    model = build_model(cfg.system.k_max, cfg.system.epsilon, cfg.system.sigma2);
    for (auto n : plan.grid) {
      q_grid.push_back(n >= 16 ? truncation_level(n) : std::numeric_limits<double>::infinity());
    }
  } else {
    msys = make_map_system(cfg.system);
    mobs = centered_observable(cfg, *msys);
  }
  const bool flow = stadium && sctx->flow.has_value();
  const std::size_t stride = kPerN + (flow ? 2 : 0);
  const std::size_t core_len = G * stride + (stadium ? 1 : 0);

  auto path_fn = [&](std::size_t i) -> ItemRecord {
    const bool plot = i < ex.plot_paths;
    PathWalker walker(plan, plot);
    ItemRecord extra;
    if (gm) {
      RngStream rng = rng_stream(ex.seed, i);
      GmSampler sampler(*model, rng);
      std::vector<std::uint64_t> exceed(G, 0);
      std::size_t g = 0;
      while (!walker.done()) {
        const double v = model->value(sampler.next());
        for (std::size_t h = g; h < G; ++h) {
          if (std::abs(v) > q_grid[h]) ++exceed[h];
        }
        walker.step(v, exceed[g]);
        while (g < G && plan.grid[g] <= walker.steps()) ++g;
      }
    } else if (stadium) {
      const StadiumContext& c = *sctx;
      RngStream rng = rng_stream(ex.seed, i);
      CollisionState s = liouville_sample(c.geom, rng);
      for (std::uint64_t j = 0; j < ex.burn_in; ++j) s = next_collision(c.geom, s).next;
      std::uint64_t returns = 0;
      CompensatedSum vh;
      CompensatedSum flow_acc;
      CompensatedSum flights;
      double time = 0.0;
      std::vector<double> vh_at(G, 0.0), flow_at(G, 0.0);
      std::size_t gv = 0, gf = 0;
      while (!walker.done() || (flow && gf < G)) {
        const CollisionStep st = next_collision(c.geom, s);
        if (!walker.done()) {
          const double inc = c.section(c.geom, s);
          if (in_return_base(st.next)) ++returns;
          flights.add(st.flight_length);
          if (flow) {
            vh.add(c.flow->integrate_flight(c.geom.position(s.component, s.param),
                                            outgoing_direction(c.geom, s), st.flight_length));
          }
          walker.step(inc, returns);
          while (gv < G && plan.grid[gv] == walker.steps()) {
            vh_at[gv] = vh.value() / plan.a[gv];
            ++gv;
          }
        }
        if (flow) {
          const Vec2 p = c.geom.position(s.component, s.param);
          const Vec2 d = outgoing_direction(c.geom, s);
          const double end = time + st.flight_length;
          while (gf < G && static_cast<double>(plan.grid[gf]) <= end) {
            const double part = c.flow->integrate_flight(
                p, d, static_cast<double>(plan.grid[gf]) - time);
            flow_at[gf] = (flow_acc.value() + part) / plan.a[gf];
            ++gf;
          }
          flow_acc.add(c.flow->integrate_flight(p, d, st.flight_length));
          time = end;
        }
        s = st.next;
      }
      ItemRecord base = walker.finish();
      ItemRecord out;
      out.reserve(core_len + (plot ? kPlotPoints + 1 : 0));
      for (std::size_t g = 0; g < G; ++g) {
        out.insert(out.end(), base.begin() + static_cast<std::ptrdiff_t>(g * kPerN),
                   base.begin() + static_cast<std::ptrdiff_t>((g + 1) * kPerN));
        if (flow) out.insert(out.end(), {flow_at[g], vh_at[g]});
      }
      out.push_back(flights.value());
      if (plot) out.insert(out.end(), walker.plot_values().begin(), walker.plot_values().end());
      return out;
    } else {
      Orbit orbit = map_start(*msys, ex.seed, i, ex.burn_in);
      std::uint64_t returns = 0;
      while (!walker.done()) {
        const double v = (*mobs)(orbit.x());
        orbit.advance();
        if (orbit.in_base()) ++returns;
        walker.step(v, returns);
      }
    }
    ItemRecord out = walker.finish();
    if (plot) out.insert(out.end(), walker.plot_values().begin(), walker.plot_values().end());
    return out;
  };

  const auto recs = runner.run("paths", static_cast<std::size_t>(ex.ensemble), path_fn);
  const std::size_t m = recs.size();
  rep.counters["paths"] = m;
  rep.counters["steps"] = m * plan.n_max;

  auto column = [&](std::size_t g, std::size_t k) {
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = recs[i][g * stride + k];
    return v;
  };

  // Table.
  if (ex.kind == ExperimentKind::Clt) {
    rep.table.columns = {"n", "path_id", "W1", "max_partial", "R_count"};
    rep.table.integer = {true, true, false, false, true};
    if (flow) {
      rep.table.columns.insert(rep.table.columns.end(), {"flow_W1", "vh_W1"});
      rep.table.integer.insert(rep.table.integer.end(), {false, false});
    }
  } else {
    rep.table.columns = {"n", "path_id", "W_0.25", "W_0.5", "W_0.75", "W1", "sup"};
    rep.table.integer = {true, true, false, false, false, false, false};
  }
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* r = &recs[i][g * stride];
      const auto n = static_cast<double>(plan.grid[g]);
      const auto id = static_cast<double>(i);
      if (ex.kind == ExperimentKind::Clt) {
        std::vector<double> row{n, id, r[0], r[1], r[2]};
        if (flow) row.insert(row.end(), {r[7], r[8]});
        rep.table.rows.push_back(std::move(row));
      } else {
        rep.table.rows.push_back({n, id, r[3], r[4], r[5], r[0], r[6]});
      }
    }
  }

  // Per-n statistics.
  Json per_n = Json::array();
  std::vector<std::vector<double>> sums(G);
  double sigma2_hat_last = 0.0;
  const std::vector<double> times{0.25, 0.5, 0.75, 1.0};
  CovarianceReport cov_last;
  double sup_ks_last = 0.0, ks_last = 0.0, ks_true_last = 0.0;
  double flow_ratio_last = std::numeric_limits<double>::quiet_NaN();
  double mean_flight = 0.0;
  if (stadium) {
    CompensatedSum fl;
    for (const auto& r : recs) fl.add(r[G * stride]);
    mean_flight = fl.value() / (static_cast<double>(m) * static_cast<double>(plan.n_max));
  }
  for (std::size_t g = 0; g < G; ++g) {
    const std::uint64_t n = plan.grid[g];
    const std::vector<double> w1 = column(g, 0);
    sums[g].resize(m);
    for (std::size_t i = 0; i < m; ++i) sums[g][i] = w1[i] * plan.a[g];
    Json row{{"n", n}, {"a_n", plan.a[g]}};
    row["mean_W1"] = tree_mean(w1);
    row["variance_W1"] = unbiased_variance(w1);
    if (m >= 4) {
      const double s2 = robust_variance(w1);
      row["robust_variance_W1"] = s2;
      sigma2_hat_last = s2;
      const EmpiricalDistribution dist(w1);
      const double sd = std::sqrt(s2);
      if (sd > 0.0) {
        const double ks = ks_distance(dist, [&](double x) { return gaussian_cdf(x, sd); });
        row["ks_gaussian"] = ks;
        ks_last = ks;
        if (gm) {
          const double sdt = std::sqrt(model->sigma2());
          ks_true_last = ks_distance(dist, [&](double x) { return gaussian_cdf(x, sdt); });
          row["ks_gaussian_exact_sigma"] = ks_true_last;
        }
        const std::string tag = "n" + std::to_string(n);
        rep.plots.push_back(ecdf_plot("ecdf_" + tag + ".svg", dist, sd, "W_n(1)"));
        rep.plots.push_back(qq_plot("qq_" + tag + ".svg", dist, sd, "W_n(1)"));

        std::vector<std::vector<double>> vals(m);
        std::vector<double> sups(m);
        for (std::size_t i = 0; i < m; ++i) {
          const double* r = &recs[i][g * stride];
          vals[i] = {r[3], r[4], r[5], r[0]};
          sups[i] = r[6];
        }
        const CovarianceReport cr = covariance_increments_report(vals, times, s2, true);
        row["cov_max_rel_deviation"] = cr.max_rel_deviation;
        row["increment_correlation"] = cr.increment_correlation;
        row["cov_matrix"] = cr.cov;
        const double sup_ks = ks_distance(EmpiricalDistribution(sups),
                                          [&](double x) { return brownian_sup_cdf(x, sd); });
        row["sup_ks"] = sup_ks;
        cov_last = cr;
        sup_ks_last = sup_ks;
      }
      if (flow) {
        const double vf = robust_variance(column(g, 7));
        const double vm = robust_variance(column(g, 8));
        row["flow_robust_variance"] = vf;
        row["vh_robust_variance"] = vm;
        const double pred = vm / mean_flight;
        row["flow_relative_deviation"] = std::abs(vf - pred) / pred;
        flow_ratio_last = std::abs(vf - pred) / pred;
      }
    }
    std::vector<double> rc = column(g, 2);
    row["mean_R_count"] = tree_mean(rc);
    per_n.push_back(row);
  }
  rep.results["per_n"] = per_n;
  if (stadium) rep.results["mean_flight"] = mean_flight;
  if (stadium) rep.results["mean_free_path_exact"] = sctx->geom.mean_free_path();
  if (gm) {
    rep.results["sigma2"] = model->sigma2();
    rep.results["scale"] = model->scale();
  }

  if (G >= 2 && m >= 100) {
    const VarianceScan scan = variance_ratio_scan(plan.grid, sums, ex.mode);
    Json rows = Json::array();
    Plot vp;
    vp.file = "variance_ratio.svg";
    vp.title = "Variance ratios of S_n";
    vp.xlabel = "n";
    vp.ylabel = "ratio";
    vp.logx = true;
    PlotSeries r1{"Var/n", {}, {}, "line"}, r2{"Var/(n ln n)", {}, {}, "line"};
    for (const auto& r : scan.rows) {
      rows.push_back({{"n", r.n},
                      {"variance", r.variance},
                      {"var_over_n", r.ratio_standard},
                      {"var_over_n_log_n", r.ratio_nonstandard}});
      r1.x.push_back(static_cast<double>(r.n));
      r1.y.push_back(r.ratio_standard);
      r2.x.push_back(static_cast<double>(r.n));
      r2.y.push_back(r.ratio_nonstandard);
    }
    vp.series = {r1, r2};
    rep.plots.push_back(vp);
    rep.results["variance_scan"] = {{"rows", rows},
                                    {"slope", finite_or_null(scan.slope)},
                                    {"degenerate", scan.degenerate}};
    if (ex.kind == ExperimentKind::Clt) {
      rep.checks.push_back(
          check_within("variance_slope", scan.slope, tol.at("slope_lo"), tol.at("slope_hi")));
    }
  }

  // Sample path bundle.
  if (ex.plot_paths > 0) {
    Plot pp;
    pp.file = "paths.svg";
    pp.title = "Sample paths W_n(t), n = " + std::to_string(plan.n_max);
    pp.xlabel = "t";
    pp.ylabel = "W_n(t)";
    for (std::size_t i = 0; i < std::min<std::uint64_t>(ex.plot_paths, m); ++i) {
      PlotSeries s{"path " + std::to_string(i), {}, {}, "line"};
      for (std::size_t k = 0; k <= kPlotPoints; ++k) {
        s.x.push_back(static_cast<double>(plan.plot_capture[k]) /
                      static_cast<double>(plan.n_max));
        s.y.push_back(recs[i][core_len + k]);
      }
      pp.series.push_back(std::move(s));
    }
    rep.plots.push_back(pp);
  }

  if (ex.kind == ExperimentKind::Clt) {
    if (gm) {
      const double s2 = model->sigma2();
      rep.checks.push_back(check_at_most("variance_rel", std::abs(sigma2_hat_last - s2) / s2,
                                         tol.at("variance_rel")));
    }
    rep.checks.push_back(check_at_most("ks", ks_last, tol.at("ks")));
    if (!gm && ex.returns > 0) {
      const ReturnSample rs = collect_returns(cfg, runner);
      const auto [coef, cells] = decomposition_cells(cfg);
      const VariancePrediction pred = predict_variance(rs, coef, cells, ex.return_block);
      rep.counters["returns"] = rs.R.size();
      rep.results["prediction"] = {{"mean_return", pred.mean_return},
                                   {"block", pred.block},
                                   {"tail_constant", pred.tail_constant},
                                   {"sigma_R2", pred.sigma_R2},
                                   {"tail_clustering", tail_clustering(rs)},
                                   {"cell_tail_constants", pred.cell_tail_constants},
                                   {"coefficients", pred.coefficients},
                                   {"sigma2", pred.sigma2},
                                   {"sigma2_hat", sigma2_hat_last}};
      rep.checks.push_back(check_at_most(
          "cross_rel", std::abs(sigma2_hat_last - pred.sigma2) / pred.sigma2,
          tol.at("cross_rel")));
    }
    if (flow) rep.checks.push_back(check_at_most("flow_rel", flow_ratio_last, tol.at("flow_rel")));
  } else {
    rep.checks.push_back(check_at_most("cov_rel", cov_last.max_rel_deviation, tol.at("cov_rel")));
    rep.checks.push_back(
        check_at_most("incr_corr", std::abs(cov_last.increment_correlation), tol.at("incr_corr")));
    rep.checks.push_back(check_at_most("sup_ks", sup_ks_last, tol.at("sup_ks")));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// calibrate

Report run_calibrate(const ExperimentConfig& cfg, Runner& runner) {
  Report rep;
  rep.config = cfg;
  const auto& ex = cfg.experiment;
  const auto tol = effective_tolerances(cfg);
  const MapSystem sys = make_map_system(cfg.system);
  const ObservableSpec obs = make_observable(cfg.observable);
  const std::size_t chunks = static_cast<std::size_t>(ex.calibration_chunks);
  const std::uint64_t total = ex.calibration_samples;
  if (total < chunks) throw ConfigError("calibration_samples must be >= calibration_chunks");

  const auto recs = runner.run("calibration", chunks, [&](std::size_t c) -> ItemRecord {
    const std::uint64_t len = total / chunks + (c < total % chunks ? 1 : 0);
    Orbit orbit = map_start(sys, ex.seed, kCalibrationStreams + c, ex.burn_in);
    CompensatedSum s;
    for (std::uint64_t j = 0; j < len; ++j) {
      s.add(obs.raw(orbit.x()));
      orbit.advance();
    }
    return {s.value(), static_cast<double>(len)};
  });
  std::vector<double> sums(chunks), means(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    sums[c] = recs[c][0];
    means[c] = recs[c][0] / recs[c][1];
  }
  CalibrationRecord cal;
  cal.system = sys.name();
  cal.c0 = cfg.observable.c0;
  cal.cos = cfg.observable.cos;
  cal.sin = cfg.observable.sin;
  cal.mean = tree_sum(sums) / static_cast<double>(total);
  cal.info.samples = total;
  cal.info.burn_in = ex.burn_in;
  cal.info.std_error = std::sqrt(unbiased_variance(means) / static_cast<double>(chunks));
  cal.info.n_max = ex.n_grid.back();
  cal.info.budget = centering_budget(std::max<std::uint64_t>(cal.info.n_max, 3));
  rep.counters["steps"] = total + chunks * ex.burn_in;
  rep.results["calibration"] = cal.to_json();
  rep.extra_files["calibration.json"] = cal.to_json().dump(2) + "\n";
  rep.table.columns = {"chunk", "samples", "mean"};
  rep.table.integer = {true, true, false};
  for (std::size_t c = 0; c < chunks; ++c) {
    rep.table.rows.push_back({static_cast<double>(c), recs[c][1], means[c]});
  }
  rep.checks.push_back(check_at_most("centering_std_error", cal.info.std_error,
                                     cal.info.budget * tol.at("budget_scale")));
  return rep;
}

// ---------------------------------------------------------------------------
// tails

Report run_tails(const ExperimentConfig& cfg, Runner& runner) {
  Report rep;
  rep.config = cfg;
  const auto tol = effective_tolerances(cfg);
  const bool stadium = cfg.system.kind == SystemKind::Stadium;
  const ReturnSample rs = collect_returns(cfg, runner);
  const std::size_t m = rs.R.size();
  rep.counters["returns"] = m;

  // Return times are integers; Hill fits run on lattice-spread copies.
  const std::uint64_t seed = cfg.experiment.seed;
  const EmpiricalDistribution dist(rs.R);
  const EmpiricalDistribution spread(lattice_spread(rs.R, seed, kSpreadStreams));
  const TailIndexEstimate hill = hill_estimator(spread, default_hill_k(m));
  const TailIndexEstimate hill_raw = hill_estimator(dist, default_hill_k(m));
  Json sweep = Json::array();
  for (const auto& e : hill_sweep(spread)) {
    sweep.push_back({{"k", e.k}, {"gamma", e.gamma}, {"tail_index", e.tail_index}});
  }
  const TailConstant tc = tail_constant_index2(dist, true);
  rep.results["R"] = {{"mean", tree_mean(rs.R)},
                      {"hill_k", hill.k},
                      {"hill_gamma", hill.gamma},
                      {"tail_index", hill.tail_index},
                      {"tail_index_unspread", hill_raw.tail_index},
                      {"hill_sweep", sweep},
                      {"tail_constant", tc.c},
                      {"tail_constant_k", tc.k},
                      {"tail_clustering", tail_clustering(rs)},
                      {"max", dist.max()}};
  rep.checks.push_back(
      check_within("hill_tail_index", hill.tail_index, tol.at("hill_lo"), tol.at("hill_hi")));

  if (stadium) {
    std::vector<double> bounce(m);
    for (std::size_t i = 0; i < m; ++i) bounce[i] = rs.n_seg[i] + 1.0;
    const EmpiricalDistribution db(lattice_spread(bounce, seed, kSpreadStreams + 1));
    const TailIndexEstimate hb = hill_estimator(db, default_hill_k(m));
    rep.results["R_bounce"] = {{"hill_gamma", hb.gamma}, {"tail_index", hb.tail_index}};
    const EmpiricalDistribution ds(lattice_spread(rs.n_slide, seed, kSpreadStreams + 2));
    if (ds.sorted()[m - default_hill_k(m) - 1] > 0.0) {
      const TailIndexEstimate hs = hill_estimator(ds, default_hill_k(m));
      rep.results["R_slide"] = {{"hill_gamma", hs.gamma}, {"tail_index", hs.tail_index}};
    } else {
      rep.results["R_slide"] = {{"hill_gamma", nullptr}, {"tail_index", nullptr}};
    }
  }

  // V = K + H.
  const auto [coef, cells] = decomposition_cells(cfg);
  InducedDecomposition dec;
  dec.cell_coefficients = coef;
  dec.delta = cfg.experiment.delta;
  dec.slide_term = stadium;
  dec.growth_tolerance = tol.at("decomposition_growth");
  std::vector<DecompositionSample> ds(m);
  for (std::size_t i = 0; i < m; ++i) {
    ds[i].R = static_cast<std::uint64_t>(rs.R[i]);
    ds[i].V = rs.V[i];
    ds[i].cell = rs.cell[i];
    ds[i].n_slide = stadium ? static_cast<std::uint64_t>(rs.n_slide[i]) : 0;
  }
  const DecompositionReport dr = decomposition_check(ds, dec);
  rep.results["decomposition"] = {{"coefficients", coef},
                                  {"delta", dec.delta},
                                  {"C", dr.C},
                                  {"max_ratio", dr.max_ratio},
                                  {"max_abs_residual", dr.max_abs_residual},
                                  {"growth_slope", dr.growth_slope},
                                  {"bins_used", dr.bins_used}};
  rep.checks.push_back(
      check_at_most("decomposition_growth", dr.growth_slope, dec.growth_tolerance));

  // Table.
  rep.table.columns = {"return_id", "R", "V", "max_partial", "cell"};
  rep.table.integer = {true, true, false, false, true};
  if (stadium) {
    rep.table.columns.insert(rep.table.columns.end(), {"n_slide", "n_seg"});
    rep.table.integer.insert(rep.table.integer.end(), {true, true});
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row{static_cast<double>(i), rs.R[i], rs.V[i], rs.max_partial[i],
                            static_cast<double>(rs.cell[i])};
    if (stadium) row.insert(row.end(), {rs.n_slide[i], rs.n_seg[i]});
    rep.table.rows.push_back(std::move(row));
  }

  // Tail log-log plot of the empirical survival function.
  Plot p;
  p.file = "tail_loglog.svg";
  p.title = "Survival function of R";
  p.xlabel = "x";
  p.ylabel = "P(R > x)";
  p.logx = p.logy = true;
  PlotSeries emp{"empirical", {}, {}, "step"}, fit{"c x^-2", {}, {}, "line"};
  const auto& s = dist.sorted();
  double prev = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (s[i] == prev) continue;
    prev = s[i];
    const auto it = std::upper_bound(s.begin(), s.end(), s[i]);
    const double surv = static_cast<double>(s.end() - it) / static_cast<double>(m);
    if (surv <= 0.0 || s[i] <= 0.0) continue;
    emp.x.push_back(s[i]);
    emp.y.push_back(surv);
  }
  if (emp.x.size() > 2 * kMaxPlotMarks) {
    PlotSeries thin{"empirical", {}, {}, "step"};
    for (std::size_t i : thin_indices(emp.x.size(), 2 * kMaxPlotMarks)) {
      thin.x.push_back(emp.x[i]);
      thin.y.push_back(emp.y[i]);
    }
    emp = thin;
  }
  for (int k = 0; k <= 50; ++k) {
    const double x = std::exp(std::log(std::max(1.0, s.front())) +
                              (std::log(s.back()) - std::log(std::max(1.0, s.front()))) * k / 50.0);
    fit.x.push_back(x);
    fit.y.push_back(std::min(1.0, tc.c / (x * x)));
  }
  p.series = {emp, fit};
  rep.plots.push_back(p);
  return rep;
}

// ---------------------------------------------------------------------------
// gm-martingale

Report run_gm_martingale(const ExperimentConfig& cfg, Runner& runner) {
  Report rep;
  rep.config = cfg;
  const auto& ex = cfg.experiment;
  const auto tol = effective_tolerances(cfg);
  const CountableMarkovModel model =
      build_model(cfg.system.k_max, cfg.system.epsilon, cfg.system.sigma2);
  const double s2 = model.sigma2();
  const std::size_t G = ex.n_grid.size();

  const MomentReport mr = moment_report(model, ex.n_grid);
  Json rows = Json::array();
  double kernel_max = 0.0;
  bool geometric = true;
  for (const auto& r : mr.rows) {
    rows.push_back({{"n", r.n},
                    {"q_n", r.q_n},
                    {"chi_sup", r.chi_sup},
                    {"chi_iterations", r.chi_iterations},
                    {"m2", r.m2},
                    {"m4", r.m4},
                    {"m2_over_log_n", r.m2_over_log_n},
                    {"kernel_residual", r.kernel_residual},
                    {"decorrelation", r.decorrelation},
                    {"decorrelation_gamma", r.decorrelation_gamma},
                    {"decorrelation_geometric", r.decorrelation_geometric}});
    kernel_max = std::max(kernel_max, r.kernel_residual);
    geometric = geometric && r.decorrelation_geometric;
  }
  rep.results["sigma2"] = s2;
  rep.results["moments"] = rows;
  rep.results["chi_ratio"] = finite_or_null(mr.chi_ratio);
  rep.checks.push_back(check_at_most("chi_ratio", mr.chi_ratio, tol.at("chi_ratio")));
  rep.checks.push_back(check_at_most(
      "m2_rel", std::abs(mr.rows.back().m2_over_log_n - s2) / s2, tol.at("m2_rel")));
  rep.checks.push_back(check_at_most("kernel", kernel_max, tol.at("kernel")));
  rep.checks.push_back(check_at_least("decorrelation_geometric", geometric ? 1.0 : 0.0, 1.0));

  // Ensemble: a_n^-2 sum m_n^2 along prefixes of one path, and exceedances of q_n.
  std::vector<MartingaleDecomposition> dec;
  std::vector<double> a2;
  for (auto n : ex.n_grid) {
    dec.push_back(martingale_decompose(model, n));
    const double a = normalizer(n, Normalization::Nonstandard);
    a2.push_back(a * a);
  }
  const std::uint64_t n_max = ex.n_grid.back();
  const auto recs = runner.run("paths", static_cast<std::size_t>(ex.ensemble),
                               [&](std::size_t i) -> ItemRecord {
    RngStream rng = rng_stream(ex.seed, i);
    GmSampler sampler(model, rng);
    std::vector<CompensatedSum> acc(G);
    std::vector<double> exceeded(G, 0.0);
    ItemRecord out(2 * G, 0.0);
    Symbol a = sampler.next();
    std::size_t g = 0;
    for (std::uint64_t j = 0; j < n_max; ++j) {
      const Symbol b = sampler.next();
      const double v = std::abs(model.value(a));
      for (std::size_t h = g; h < G; ++h) {
        const double mm = dec[h].m(a, b);
        acc[h].add(mm * mm);
        if (v > dec[h].q_n) exceeded[h] = 1.0;
      }
      a = b;
      while (g < G && ex.n_grid[g] == j + 1) {
        out[2 * g] = acc[g].value() / a2[g];
        out[2 * g + 1] = exceeded[g];
        ++g;
      }
    }
    return out;
  });
  const std::size_t m = recs.size();
  rep.counters["paths"] = m;
  rep.counters["steps"] = m * (n_max + 1);

  Json ens = Json::array();
  std::vector<double> vars(G);
  double discard_c = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> x(m), e(m), dev(m);
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = recs[i][2 * g];
      e[i] = recs[i][2 * g + 1];
      dev[i] = (x[i] - s2) * (x[i] - s2);
    }
    vars[g] = unbiased_variance(x);
    const double frac = tree_mean(e);
    const double lln = std::log(std::log(static_cast<double>(ex.n_grid[g])));
    discard_c = std::max(discard_c, frac * lln);
    ens.push_back({{"n", ex.n_grid[g]},
                   {"mean", tree_mean(x)},
                   {"variance", vars[g]},
                   {"mse_about_sigma2", tree_mean(dev)},
                   {"discard_fraction", frac}});
    for (std::size_t i = 0; i < m; ++i) {
      rep.table.rows.push_back({static_cast<double>(ex.n_grid[g]), static_cast<double>(i), x[i], e[i]});
    }
  }
  rep.table.columns = {"n", "path_id", "square_sum_scaled", "exceeded_q_n"};
  rep.table.integer = {true, true, false, true};
  rep.results["ensemble"] = ens;
  rep.results["discard_c"] = discard_c;
  bool decreasing = true;
  for (std::size_t g = 1; g < G; ++g) decreasing = decreasing && vars[g] < vars[g - 1];
  rep.checks.push_back(check_at_least("square_sum_decreasing", decreasing ? 1.0 : 0.0, 1.0));
  rep.checks.push_back(
      check_at_most("square_sum_var", vars.back() / (s2 * s2), tol.at("square_sum_var")));
  rep.checks.push_back(check_at_most("discard_c", discard_c, tol.at("discard_c")));
  return rep;
}

// ---------------------------------------------------------------------------
// stadium-geom

double uniform_ks(std::vector<double> u) {
  const EmpiricalDistribution d(std::move(u));
  return ks_distance(d, [](double x) { return std::clamp(x, 0.0, 1.0); });
}

Report run_stadium_geom(const ExperimentConfig& cfg, Runner& runner) {
  Report rep;
  rep.config = cfg;
  const auto& ex = cfg.experiment;
  const auto tol = effective_tolerances(cfg);
  const StadiumContext ctx(cfg);
  const StadiumGeometry& geom = ctx.geom;
  const double L = geom.segment_length();

  // Period-2 orbits, 1000 bounces each.
  constexpr int kBounces = 1000;
  double closure = 0.0;
  {
    CollisionState s{Component::C1, 0.0, 0.0, Component::C2};
    const Vec2 p0 = geom.position(Component::C1, 0.0);
    for (int k = 1; k <= kBounces; ++k) {
      s = next_collision(geom, s).next;
      const Vec2 expect =
          (k % 2 == 0) ? p0 : geom.position(Component::C2, 0.0);
      const Vec2 p = geom.position(s.component, s.param);
      closure = std::max({closure, std::hypot(p.x - expect.x, p.y - expect.y), std::abs(s.psi)});
    }
    CollisionState v{Component::S1, 0.5 * L, 0.0, Component::S2};
    const Vec2 q0 = geom.position(Component::S1, 0.5 * L);
    for (int k = 1; k <= kBounces; ++k) {
      v = next_collision(geom, v).next;
      const Vec2 expect = (k % 2 == 0) ? q0 : geom.position(Component::S2, 0.5 * L);
      const Vec2 p = geom.position(v.component, v.param);
      closure = std::max({closure, std::hypot(p.x - expect.x, p.y - expect.y), std::abs(v.psi)});
    }
  }
  rep.results["period2_closure"] = closure;
  rep.checks.push_back(check_at_most("closure", closure, tol.at("closure")));

  // Liouville invariance: push samples forward one collision.
  const std::uint64_t N = ex.liouville_samples;
  constexpr std::size_t kChunks = 64;
  const auto recs = runner.run("liouville", kChunks, [&](std::size_t c) -> ItemRecord {
    const std::uint64_t len = N / kChunks + (c < N % kChunks ? 1 : 0);
    RngStream rng = rng_stream(ex.seed, kGeometryStreams + c);
    ItemRecord out;
    out.reserve(len * 6);
    for (std::uint64_t k = 0; k < len; ++k) {
      const CollisionState s = liouville_sample(geom, rng);
      const CollisionStep st = next_collision(geom, s);
      const double res = specular_residual(geom, s);
      out.insert(out.end(),
                 {geom.arclength(s.component, s.param) / geom.perimeter(),
                  0.5 * (std::sin(s.psi) + 1.0),
                  geom.arclength(st.next.component, st.next.param) / geom.perimeter(),
                  0.5 * (std::sin(st.next.psi) + 1.0), st.flight_length, res});
    }
    return out;
  });
  std::vector<double> s0, p0, s1, p1, fl;
  double spec = 0.0;
  for (const auto& r : recs) {
    for (std::size_t i = 0; i + 6 <= r.size(); i += 6) {
      s0.push_back(r[i]);
      p0.push_back(r[i + 1]);
      s1.push_back(r[i + 2]);
      p1.push_back(r[i + 3]);
      fl.push_back(r[i + 4]);
      spec = std::max(spec, std::abs(r[i + 5]));
    }
  }
  const double ks_s = uniform_ks(s1), ks_p = uniform_ks(p1);
  rep.results["liouville"] = {{"samples", s0.size()},
                              {"ks_arclength_initial", uniform_ks(s0)},
                              {"ks_sin_psi_initial", uniform_ks(p0)},
                              {"ks_arclength_image", ks_s},
                              {"ks_sin_psi_image", ks_p},
                              {"mean_flight", tree_mean(fl)},
                              {"mean_free_path_exact", geom.mean_free_path()},
                              {"max_specular_residual", spec}};
  rep.checks.push_back(check_at_most("liouville_ks", std::max(ks_s, ks_p), tol.at("liouville_ks")));
  rep.checks.push_back(check_at_most("specular", spec, tol.at("specular")));

  const FlowObservable flow = ctx.flow ? *ctx.flow : FlowObservable::constant(0.0);
  const BoundaryAverages avg = boundary_averages(geom, ctx.section, flow);
  rep.results["boundary_averages"] = {{"I_v", avg.I_v}, {"J_v", avg.J_v}};
  rep.counters["liouville_samples"] = s0.size();

  rep.table.columns = {"sample_id", "s_before", "sinpsi_before", "s_after", "sinpsi_after"};
  rep.table.integer = {true, false, false, false, false};
  for (std::size_t i = 0; i < s0.size(); ++i) {
    rep.table.rows.push_back({static_cast<double>(i), s0[i], 2.0 * p0[i] - 1.0, s1[i],
                              2.0 * p1[i] - 1.0});
  }
  return rep;
}

}  // namespace

Report run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Runner runner(options, config.hash());
  Report rep;
  switch (config.experiment.kind) {
    case ExperimentKind::Calibrate: rep = run_calibrate(config, runner); break;
    case ExperimentKind::Clt:
    case ExperimentKind::Wip: rep = run_ensemble(config, runner); break;
    case ExperimentKind::Tails: rep = run_tails(config, runner); break;
    case ExperimentKind::GmMartingale: rep = run_gm_martingale(config, runner); break;
    case ExperimentKind::StadiumGeom: rep = run_stadium_geom(config, runner); break;
  }
  rep.timing = runner.phase_seconds();
  runner.finish();
  return rep;
}

}  // namespace nswip
