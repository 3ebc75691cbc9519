// nswip: run one verification experiment from a TOML config.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nswip/config.hpp"
#include "nswip/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTolerance = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  std::vector<std::string> tolerances;
  std::optional<double> checkpoint_interval;
  std::optional<std::size_t> stop_after;
  bool verbose = false;
};

int run(nswip::ExperimentKind kind, const Flags& f) {
  using namespace nswip;
  ExperimentConfig cfg;
  try {
    cfg = load_config(f.config);
    cfg.experiment.kind = kind;
    if (f.seed) cfg.experiment.seed = *f.seed;
    if (f.workers) cfg.experiment.workers = *f.workers;
    if (f.out) cfg.experiment.out = *f.out;
    if (f.checkpoint_interval) cfg.experiment.checkpoint_interval = *f.checkpoint_interval;
    for (const auto& t : f.tolerances) apply_tolerance_override(cfg, t);
    cfg.validate();
    (void)effective_tolerances(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::filesystem::path out = cfg.experiment.out;
  RunOptions opt;
  opt.workers = std::max(1u, cfg.experiment.workers);
  opt.checkpoint_interval = cfg.experiment.checkpoint_interval;
  opt.checkpoint_path = out / "checkpoint.json";
  opt.stop_after_items = f.stop_after;
  opt.verbose = f.verbose;
  try {
    std::filesystem::create_directories(out);
    const Report rep = run_experiment(cfg, opt);
    emit_artifacts(rep, out);
    for (const auto& c : rep.checks) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << format_number(c.value)
                << "  [" << format_number(c.lo) << ", " << format_number(c.hi) << "]\n";
    }
    std::cout << "report: " << (out / "report.json").string() << "\n";
    return rep.pass() ? kExitOk : kExitTolerance;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Interrupted& e) {
    std::cerr << "interrupted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonstandard CLT / WIP verification harness"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "TOML experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "64-bit seed (overrides the config)");
  app.add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", f.out, "output directory");
  app.add_option("--tolerance", f.tolerances, "tolerance override name=value (repeatable)");
  app.add_option("--checkpoint-interval", f.checkpoint_interval, "seconds between checkpoints");
  app.add_option("--stop-after", f.stop_after, "test hook: stop after this many work items")
      ->group("");
  app.add_flag("-v,--verbose", f.verbose, "progress on stderr");
  app.fallthrough();

  const std::pair<const char*, nswip::ExperimentKind> kinds[] = {
      {"calibrate", nswip::ExperimentKind::Calibrate},
      {"clt", nswip::ExperimentKind::Clt},
      {"wip", nswip::ExperimentKind::Wip},
      {"tails", nswip::ExperimentKind::Tails},
      {"gm-martingale", nswip::ExperimentKind::GmMartingale},
      {"stadium-geom", nswip::ExperimentKind::StadiumGeom},
  };
  for (const auto& [name, kind] : kinds) app.add_subcommand(name, std::string("run the ") + name + " experiment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  for (const auto& [name, kind] : kinds) {
    if (app.got_subcommand(name)) return run(kind, f);
  }
  return kExitConfig;
}
