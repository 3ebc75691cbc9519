#include "nswip/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "nswip/errors.hpp"

namespace nswip {

const char* to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::Calibrate: return "calibrate";
    case ExperimentKind::Clt: return "clt";
    case ExperimentKind::Wip: return "wip";
    case ExperimentKind::Tails: return "tails";
    case ExperimentKind::GmMartingale: return "gm-martingale";
    case ExperimentKind::StadiumGeom: return "stadium-geom";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::Calibrate, ExperimentKind::Clt, ExperimentKind::Wip,
                 ExperimentKind::Tails, ExperimentKind::GmMartingale,
                 ExperimentKind::StadiumGeom}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

const char* to_string(SystemKind k) noexcept {
  switch (k) {
    case SystemKind::Lsv: return "lsv";
    case SystemKind::DoubleNeutral: return "double_neutral";
    case SystemKind::Afn: return "afn";
    case SystemKind::Stadium: return "stadium";
    case SystemKind::Gm: return "gm";
  }
  return "?";
}

SystemKind parse_system_kind(const std::string& name) {
  for (auto k : {SystemKind::Lsv, SystemKind::DoubleNeutral, SystemKind::Afn,
                 SystemKind::Stadium, SystemKind::Gm}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown system '" + name + "'");
}

// ---------------------------------------------------------------------------

namespace {

using Json = nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double get_double(const toml::node& n, const std::string& where) {
  if (auto v = n.value<double>()) return *v;
  bad(where, "expected a number");
}

std::uint64_t get_u64(const toml::node& n, const std::string& where) {
  if (n.is_integer()) {
    const auto v = *n.value<std::int64_t>();
    if (v < 0) bad(where, "expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }
  if (n.is_floating_point()) {
    // Allow 1e6-style literals when they are exact integers.
    const double d = *n.value<double>();
    if (d >= 0.0 && d < 1.8e19 && d == static_cast<double>(static_cast<std::uint64_t>(d))) {
      return static_cast<std::uint64_t>(d);
    }
  }
  if (n.is_string()) {
    const std::string s = *n.value<std::string>();
    std::uint64_t v = 0;
    const bool hex = s.rfind("0x", 0) == 0;
    const char* first = s.data() + (hex ? 2 : 0);
    auto [p, ec] = std::from_chars(first, s.data() + s.size(), v, hex ? 16 : 10);
    if (ec == std::errc() && p == s.data() + s.size()) return v;
  }
  bad(where, "expected a non-negative integer");
}

std::string get_string(const toml::node& n, const std::string& where) {
  if (auto v = n.value<std::string>()) return *v;
  bad(where, "expected a string");
}

std::vector<double> get_double_array(const toml::node& n, const std::string& where) {
  const auto* arr = n.as_array();
  if (!arr) bad(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    out.push_back(get_double(*arr->get(i), where));
  }
  return out;
}

std::vector<std::uint64_t> get_u64_array(const toml::node& n, const std::string& where) {
  const auto* arr = n.as_array();
  if (!arr) bad(where, "expected an array of integers");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(get_u64(*arr->get(i), where));
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ": TOML parse error: " << e.description() << " at line "
       << e.source().begin.line;
    throw ConfigError(os.str());
  }
  ExperimentConfig cfg;
  for (auto&& [section_key, section_node] : root) {
    const std::string section(section_key.str());
    const auto* tbl = section_node.as_table();
    if (!tbl) bad(source, "top-level key '" + section + "' must be a table");
    for (auto&& [k, node] : *tbl) {
      const std::string key(k.str());
      const std::string where = source + ": [" + section + "]." + key;
      if (section == "system") {
        auto& s = cfg.system;
        if (key == "kind") s.kind = parse_system_kind(get_string(node, where));
        else if (key == "alpha") s.alpha = get_double(node, where);
        else if (key == "b") s.b = get_double(node, where);
        else if (key == "length") s.length = get_double(node, where);
        else if (key == "k_max") {
          const auto v = get_u64(node, where);
          if (v > 0xFFFFFFFFULL) bad(where, "too large");
          s.k_max = static_cast<std::uint32_t>(v);
        } else if (key == "epsilon") s.epsilon = get_double(node, where);
        else if (key == "sigma2") s.sigma2 = get_double(node, where);
        else bad(where, "unknown key");
      } else if (section == "observable") {
        auto& o = cfg.observable;
        if (key == "c0") o.c0 = get_double(node, where);
        else if (key == "cos") o.cos = get_double_array(node, where);
        else if (key == "sin") o.sin = get_double_array(node, where);
        else if (key == "centering") o.centering = get_string(node, where);
        else if (key == "centering_value") o.centering_value = get_double(node, where);
        else if (key == "calibration_file") o.calibration_file = get_string(node, where);
        else if (key == "section") o.section = get_string(node, where);
        else if (key == "flow") o.flow = get_string(node, where);
        else bad(where, "unknown key");
      } else if (section == "experiment") {
        auto& e = cfg.experiment;
        if (key == "kind") e.kind = parse_experiment_kind(get_string(node, where));
        else if (key == "n_grid") e.n_grid = get_u64_array(node, where);
        else if (key == "ensemble") e.ensemble = get_u64(node, where);
        else if (key == "seed") e.seed = get_u64(node, where);
        else if (key == "mode") {
          try {
            e.mode = parse_normalization(get_string(node, where));
          } catch (const DomainError& err) {
            bad(where, err.what());
          }
        } else if (key == "burn_in") e.burn_in = get_u64(node, where);
        else if (key == "calibration_samples") e.calibration_samples = get_u64(node, where);
        else if (key == "calibration_chunks") e.calibration_chunks = get_u64(node, where);
        else if (key == "returns") e.returns = get_u64(node, where);
        else if (key == "plot_paths") e.plot_paths = get_u64(node, where);
        else if (key == "liouville_samples") e.liouville_samples = get_u64(node, where);
        else if (key == "delta") e.delta = get_double(node, where);
        else if (key == "return_block") e.return_block = get_u64(node, where);
        else if (key == "workers") e.workers = static_cast<unsigned>(get_u64(node, where));
        else if (key == "checkpoint_interval") e.checkpoint_interval = get_double(node, where);
        else if (key == "out") e.out = get_string(node, where);
        else bad(where, "unknown key");
      } else if (section == "tolerances") {
        cfg.tolerances[key] = get_double(node, where);
      } else {
        bad(source, "unknown section [" + section + "]");
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.string());
}

void ExperimentConfig::validate() const {
  const auto& e = experiment;
  if (e.ensemble < 1) throw ConfigError("experiment.ensemble must be >= 1");
  const bool needs_grid = e.kind != ExperimentKind::StadiumGeom;
  if (needs_grid && e.n_grid.empty()) throw ConfigError("experiment.n_grid is empty");
  for (std::size_t i = 0; i < e.n_grid.size(); ++i) {
    if (i > 0 && e.n_grid[i] <= e.n_grid[i - 1]) {
      throw ConfigError("experiment.n_grid must be strictly ascending");
    }
    const std::uint64_t min_n = e.mode == Normalization::Nonstandard ? 3 : 2;
    if (e.n_grid[i] < min_n) {
      throw ConfigError("experiment.n_grid values below the minimum for the mode");
    }
  }
  if (e.kind == ExperimentKind::GmMartingale) {
    for (auto n : e.n_grid) {
      if (n < 16) throw ConfigError("gm-martingale needs n >= 16");
    }
  }
  if (e.workers < 1) throw ConfigError("experiment.workers must be >= 1");
  if (!(e.checkpoint_interval > 0.0)) {
    throw ConfigError("experiment.checkpoint_interval must be positive");
  }
  if (!(e.delta > 0.0 && e.delta < 1.0)) throw ConfigError("experiment.delta must be in (0,1)");
  if (e.return_block < 1) throw ConfigError("experiment.return_block must be >= 1");
  if (e.calibration_chunks < 2) throw ConfigError("experiment.calibration_chunks must be >= 2");

  const bool gm = system.kind == SystemKind::Gm;
  const bool stadium = system.kind == SystemKind::Stadium;
  switch (e.kind) {
    case ExperimentKind::GmMartingale:
      if (!gm) throw ConfigError("gm-martingale requires system.kind = \"gm\"");
      break;
    case ExperimentKind::StadiumGeom:
      if (!stadium) throw ConfigError("stadium-geom requires system.kind = \"stadium\"");
      break;
    case ExperimentKind::Calibrate:
      if (!is_interval_map(system.kind)) {
        throw ConfigError("calibrate applies to interval maps");
      }
      break;
    case ExperimentKind::Tails:
      if (gm) throw ConfigError("tails applies to interval maps and the stadium");
      if (e.returns < 100) throw ConfigError("tails needs experiment.returns >= 100");
      break;
    default:
      break;
  }
  if (is_interval_map(system.kind)) {
    const auto& c = observable.centering;
    if (c != "calibrated" && c != "exact" && c != "none") {
      throw ConfigError("observable.centering must be calibrated, exact or none");
    }
  }
  // Parameter ranges are checked by the constructors; surface them as config errors.
  try {
    switch (system.kind) {
      case SystemKind::Lsv: (void)MapSystem::lsv(system.alpha); break;
      case SystemKind::Afn: (void)MapSystem::afn(system.b); break;
      case SystemKind::Stadium:
        if (!(system.length > 0.0)) throw ConfigError("system.length must be positive");
        break;
      case SystemKind::Gm:
        if (system.k_max < 100) throw ConfigError("system.k_max must be >= 100");
        if (system.epsilon < 0.0 || system.epsilon > 0.9) {
          throw ConfigError("system.epsilon must lie in [0, 0.9]");
        }
        break;
      default: break;
    }
  } catch (const DomainError& err) {
    throw ConfigError(err.what());
  }
  (void)effective_tolerances(*this);
}

nlohmann::json ExperimentConfig::to_json() const {
  Json sys = {{"kind", to_string(system.kind)}};
  switch (system.kind) {
    case SystemKind::Lsv: sys["alpha"] = system.alpha; break;
    case SystemKind::Afn: sys["b"] = system.b; break;
    case SystemKind::Stadium: sys["length"] = system.length; break;
    case SystemKind::Gm:
      sys["k_max"] = system.k_max;
      sys["epsilon"] = system.epsilon;
      if (system.sigma2) sys["sigma2"] = *system.sigma2;
      break;
    default: break;
  }
  Json obs;
  if (is_interval_map(system.kind)) {
    obs = {{"c0", observable.c0},
           {"cos", observable.cos},
           {"sin", observable.sin},
           {"centering", observable.centering}};
    if (observable.centering == "exact") obs["centering_value"] = observable.centering_value;
  } else if (system.kind == SystemKind::Stadium) {
    obs = {{"section", observable.section}, {"flow", observable.flow}};
  } else {
    obs = {{"V", "sign * scale * k"}};
  }
  const auto& e = experiment;
  Json exp = {{"kind", to_string(e.kind)}, {"n_grid", e.n_grid},
              {"ensemble", e.ensemble},    {"seed", e.seed},
              {"mode", to_string(e.mode)}, {"burn_in", e.burn_in}};
  switch (e.kind) {
    case ExperimentKind::Calibrate:
      exp["calibration_samples"] = e.calibration_samples;
      exp["calibration_chunks"] = e.calibration_chunks;
      break;
    case ExperimentKind::Tails:
      exp["returns"] = e.returns;
      exp["return_block"] = e.return_block;
      exp["delta"] = e.delta;
      break;
    case ExperimentKind::StadiumGeom:
      exp["liouville_samples"] = e.liouville_samples;
      break;
    case ExperimentKind::Clt:
    case ExperimentKind::Wip:
      exp["returns"] = e.returns;
      exp["return_block"] = e.return_block;
      exp["plot_paths"] = e.plot_paths;
      break;
    default: break;
  }
  Json tol(Json::value_t::object);
  for (const auto& [k, v] : effective_tolerances(*this)) tol[k] = v;
  return Json{{"system", sys}, {"observable", obs}, {"experiment", exp}, {"tolerances", tol}};
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(to_json().dump()); }

// ---------------------------------------------------------------------------

std::map<std::string, double> default_tolerances(ExperimentKind kind, SystemKind system,
                                                 Normalization mode) {
  const bool nonstd = mode == Normalization::Nonstandard;
  switch (kind) {
    case ExperimentKind::Calibrate:
      return {{"budget_scale", 1.0}};
    case ExperimentKind::Clt: {
      std::map<std::string, double> t{{"slope_lo", nonstd ? 1.02 : 0.9},
                                      {"slope_hi", nonstd ? 1.25 : 1.1}};
      if (system == SystemKind::Gm) {
        t["variance_rel"] = 0.15;
        t["ks"] = 0.03;
      } else {
        t["ks"] = 0.05;
        t["cross_rel"] = system == SystemKind::Stadium ? 0.35 : 0.30;
      }
      if (system == SystemKind::Stadium) t["flow_rel"] = 0.20;
      return t;
    }
    case ExperimentKind::Wip:
      return {{"cov_rel", 0.15}, {"incr_corr", 0.07}, {"sup_ks", 0.07}};
    case ExperimentKind::Tails:
      return {{"hill_lo", 1.8}, {"hill_hi", 2.2}, {"decomposition_growth", 0.05}};
    case ExperimentKind::GmMartingale:
      return {{"chi_ratio", 3.0},  {"m2_rel", 0.2},     {"square_sum_var", 0.2},
              {"kernel", 1e-12},   {"discard_c", 1.0}};
    case ExperimentKind::StadiumGeom:
      return {{"closure", 1e-9}, {"liouville_ks", 0.005}, {"specular", 1e-9}};
  }
  return {};
}

std::map<std::string, double> effective_tolerances(const ExperimentConfig& cfg) {
  auto tol = default_tolerances(cfg.experiment.kind, cfg.system.kind, cfg.experiment.mode);
  for (const auto& [k, v] : cfg.tolerances) {
    auto it = tol.find(k);
    if (it == tol.end()) {
      throw ConfigError("unknown tolerance '" + k + "' for experiment " +
                        to_string(cfg.experiment.kind));
    }
    it->second = v;
  }
  return tol;
}

void apply_tolerance_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("tolerance override must look like name=value");
  }
  const std::string name = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError("tolerance override '" + assignment + "': bad number");
  }
  cfg.tolerances[name] = v;
}

MapSystem make_map_system(const SystemConfig& sys) {
  switch (sys.kind) {
    case SystemKind::Lsv: return MapSystem::lsv(sys.alpha);
    case SystemKind::DoubleNeutral: return MapSystem::double_neutral();
    case SystemKind::Afn: return MapSystem::afn(sys.b);
    default: throw ConfigError("system is not an interval map");
  }
}

ObservableSpec make_observable(const ObservableConfig& obs) {
  return ObservableSpec(obs.c0, obs.cos, obs.sin);
}

}  // namespace nswip
