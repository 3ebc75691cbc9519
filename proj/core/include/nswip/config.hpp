#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nswip/dynamics.hpp"
#include "nswip/inducing.hpp"

namespace nswip {

enum class ExperimentKind { Calibrate, Clt, Wip, Tails, GmMartingale, StadiumGeom };

const char* to_string(ExperimentKind k) noexcept;
ExperimentKind parse_experiment_kind(const std::string& name);

enum class SystemKind { Lsv, DoubleNeutral, Afn, Stadium, Gm };

const char* to_string(SystemKind k) noexcept;
SystemKind parse_system_kind(const std::string& name);
inline bool is_interval_map(SystemKind k) noexcept {
  return k == SystemKind::Lsv || k == SystemKind::DoubleNeutral || k == SystemKind::Afn;
}

struct SystemConfig {
  SystemKind kind = SystemKind::Gm;
  double alpha = 2.0;                  // lsv
  double b = 1.0;                      // afn
  double length = 2.0;                 // stadium segment length L
  std::uint32_t k_max = 1'000'000;     // gm
  double epsilon = 0.5;                // gm
  std::optional<double> sigma2;        // gm: target tail constant
};

struct ObservableConfig {
  // Interval maps: c0 + sum a_m cos(pi m x) + b_m sin(pi m x).
  double c0 = 0.0;
  std::vector<double> cos;
  std::vector<double> sin;
  /// "calibrated" (needs a calibration record), "exact" (uses centering_value)
  /// or "none".
  std::string centering = "calibrated";
  double centering_value = 0.0;
  std::string calibration_file;
  // Stadium.
  std::string section = "segment_indicator";
  /// "none" or a flow observable name (e.g. "vy_squared").
  std::string flow = "none";
};

struct ExperimentSection {
  ExperimentKind kind = ExperimentKind::Clt;
  std::vector<std::uint64_t> n_grid{1000};
  std::uint64_t ensemble = 100;
  std::uint64_t seed = 1;
  Normalization mode = Normalization::Nonstandard;
  std::uint64_t burn_in = 1000;
  /// Calibration: total samples split over independent chunks.
  std::uint64_t calibration_samples = 100'000'000;
  std::uint64_t calibration_chunks = 64;
  /// Tails / cross-consistency: number of returns collected.
  std::uint64_t returns = 0;
  /// Consecutive returns summed before the tail fit of sigma_R^2; > 1 when
  /// large returns cluster (stadium).
  std::uint64_t return_block = 1;
  /// Paths whose coarse trajectories are stored for the path-bundle plot.
  std::uint64_t plot_paths = 16;
  /// Liouville samples for the stadium invariance check.
  std::uint64_t liouville_samples = 200'000;
  /// Decomposition residual exponent.
  double delta = 0.1;
  unsigned workers = 1;
  double checkpoint_interval = 60.0;
  std::string out = "out";
};

struct ExperimentConfig {
  SystemConfig system;
  ObservableConfig observable;
  ExperimentSection experiment;
  /// Overrides of the acceptance tolerances; names are validated per kind.
  std::map<std::string, double> tolerances;

  /// Config echo for reports (excludes workers, out and checkpoint interval,
  /// which must not change results).
  nlohmann::json to_json() const;
  /// FNV-1a hash of the echo; ties checkpoints to a config.
  std::uint64_t hash() const;
  void validate() const;
};

/// Parse TOML text; unknown sections or keys are ConfigError.
ExperimentConfig parse_config(const std::string& toml_text, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Tolerance names and defaults for an experiment kind.
std::map<std::string, double> default_tolerances(ExperimentKind kind, SystemKind system,
                                                 Normalization mode);
/// Defaults merged with overrides; unknown names are ConfigError.
std::map<std::string, double> effective_tolerances(const ExperimentConfig& cfg);
/// Parse "name=value" into cfg.tolerances.
void apply_tolerance_override(ExperimentConfig& cfg, const std::string& assignment);

/// Build the map system and observable for an interval-map config.
MapSystem make_map_system(const SystemConfig& sys);
ObservableSpec make_observable(const ObservableConfig& obs);

}  // namespace nswip
