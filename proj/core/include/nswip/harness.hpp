#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nswip/config.hpp"
#include "nswip/errors.hpp"
#include "nswip/stadium.hpp"

namespace nswip {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kCheckpointVersion = 1;

/// Raised by the stop_after_items test hook after the checkpoint is written.
class Interrupted : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  unsigned workers = 1;
  double checkpoint_interval = 60.0;
  /// Empty: no checkpointing.
  std::filesystem::path checkpoint_path;
  /// Test hook: stop after this many newly completed items in total.
  std::optional<std::size_t> stop_after_items;
  /// Progress lines on stderr.
  bool verbose = false;
};

/// One work item's result: a flat vector of numbers (round-trips exactly
/// through the JSON checkpoint).
using ItemRecord = std::vector<double>;

/// Schedules work items over threads and owns the checkpoint file.
class Runner {
 public:
  Runner(RunOptions options, std::uint64_t config_hash);

  /// Runs items 0..count-1 of a named phase; results are stored by index so
  /// the output is independent of the schedule. Completed items found in the
  /// checkpoint are not recomputed.
  std::vector<ItemRecord> run(const std::string& phase, std::size_t count,
                              const std::function<ItemRecord(std::size_t)>& fn);

  /// Delete the checkpoint after a successful run.
  void finish();

  /// Wall-clock seconds per phase (kept out of reports).
  const std::map<std::string, double>& phase_seconds() const noexcept { return seconds_; }
  std::size_t items_computed() const noexcept { return computed_; }

 private:
  void load();
  void save() const;

  RunOptions opt_;
  std::uint64_t hash_;
  nlohmann::json state_;
  std::map<std::string, double> seconds_;
  std::size_t computed_ = 0;
};

struct Check {
  std::string name;
  double value = 0.0;
  /// Accepted interval [lo, hi] (either side may be infinite).
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
};

Check check_at_most(std::string name, double value, double hi);
Check check_at_least(std::string name, double value, double lo);
Check check_within(std::string name, double value, double lo, double hi);

/// CSV payload; integer columns are printed without a decimal point.
struct Table {
  std::vector<std::string> columns;
  std::vector<bool> integer;
  std::vector<std::vector<double>> rows;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// "line", "step" or "points".
  std::string style = "line";
};

struct Plot {
  std::string file;
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool logx = false;
  bool logy = false;
  std::vector<PlotSeries> series;
};

struct Report {
  ExperimentConfig config;
  nlohmann::json results = nlohmann::json::object();
  std::vector<Check> checks;
  Table table;
  std::vector<Plot> plots;
  /// Extra files written next to the report (e.g. calibration.json).
  std::map<std::string, std::string> extra_files;
  /// Deterministic iteration counters.
  std::map<std::string, std::uint64_t> counters;
  /// Wall-clock per phase; written to timing.json only.
  std::map<std::string, double> timing;

  bool pass() const noexcept;
  /// Schema-versioned report body (no wall-clock data).
  nlohmann::json to_json() const;
};

/// Runs the configured experiment. Throws ConfigError for invalid configs
/// or missing calibration, Interrupted for the test hook, other Errors for
/// runtime failures.
Report run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Writes report.json, data.csv, timing.json, plots/*.svg and extra files.
/// Same report, same bytes. Throws IoError.
void emit_artifacts(const Report& report, const std::filesystem::path& dir);

/// Shortest round-trip decimal.
std::string format_number(double v);
std::string table_to_csv(const Table& t);
std::string plot_to_svg(const Plot& p);

// --- building blocks shared with the acceptance suite ----------------------

/// Calibration record as written by the calibrate experiment.
struct CalibrationRecord {
  std::string system;
  double c0 = 0.0;
  std::vector<double> cos;
  std::vector<double> sin;
  double mean = 0.0;
  CalibrationInfo info;

  nlohmann::json to_json() const;
  static CalibrationRecord from_json(const nlohmann::json& j);
};

/// The centered observable for an interval-map config: exact, none, or from
/// the calibration file (ConfigError if missing or mismatched).
ObservableSpec centered_observable(const ExperimentConfig& cfg, const MapSystem& system);

/// Returns collected from independent orbits (maps) or trajectories (stadium).
struct ReturnSample {
  std::vector<double> R;
  std::vector<double> V;
  std::vector<double> max_partial;
  std::vector<std::size_t> cell;
  std::vector<double> n_slide;
  std::vector<double> n_seg;
  /// Start index of each independent orbit's run of returns.
  std::vector<std::size_t> run_starts;
};

/// Tail-based prediction of the limit variance: R̄^{-1} sum_i c_i^2 tau_i,
/// tau_i the share of sigma_R^2 carried by exceedances in cell i.
/// sigma_R^2 is the index-2 tail constant of centered sums of `block`
/// consecutive returns (within one run), divided by `block`.
struct VariancePrediction {
  double mean_return = 0.0;
  std::uint64_t block = 1;
  /// Marginal tail constant of R.
  double tail_constant = 0.0;
  double sigma_R2 = 0.0;
  std::vector<double> cell_tail_constants;
  std::vector<double> coefficients;
  double sigma2 = 0.0;
};
VariancePrediction predict_variance(const ReturnSample& returns,
                                    std::span<const double> coefficients,
                                    std::size_t cells, std::uint64_t block = 1);

/// Fraction of the top sqrt(m) returns whose successor in the same run is
/// also in the top sqrt(m); about k/m for asymptotically independent returns.
double tail_clustering(const ReturnSample& returns);

}  // namespace nswip
