#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mtpsr/error.hpp"
#include "mtpsr/experiment.hpp"

namespace fs = std::filesystem;
using namespace mtpsr;

namespace {

struct Overrides {
  std::string seeds;
  std::string out;
  int jobs = 0;
  std::uint64_t budget = 0;
};

void apply(ExperimentConfig& cfg, const Overrides& o) {
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.jobs > 0) cfg.jobs = o.jobs;
  if (o.budget > 0) cfg.budget = o.budget;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const BudgetError*>(&e)) return 3;
  if (dynamic_cast<const InvariantViolation*>(&e) || dynamic_cast<const ModelIntegrityError*>(&e) ||
      dynamic_cast<const EmptyClassError*>(&e) || dynamic_cast<const DegenerateHistoryError*>(&e)) {
    return 4;
  }
  return 1;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seeds", o.seeds, "seed list such as 0-19 or 1,4,7");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "worker threads across seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--budget", o.budget, "operation budget per seed")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task PSR experiment harness"};
  app.require_subcommand(1);

  std::string config;
  std::string baseline;
  Overrides o;

  CLI::App* run = app.add_subcommand("run", "run every seed of a scenario and aggregate");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  add_common(run, o);

  CLI::App* compare = app.add_subcommand("compare", "paired joint vs baseline iterations-to-threshold");
  compare->add_option("--config", config, "joint-class config (JSON)")->required();
  compare->add_option("--baseline", baseline, "baseline config; defaults to the product class of --config");
  add_common(compare, o);

  std::string plots_dir;
  CLI::App* plots = app.add_subcommand("plots", "write two-column series from a result directory");
  plots->add_option("--out", plots_dir, "result directory holding summary.json")->required();

  CLI::App* validate = app.add_subcommand("validate", "check a config and its enumeration cost");
  validate->add_option("--config", config, "experiment config (JSON)")->required();
  add_common(validate, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      ExperimentConfig cfg = load_config(config);
      apply(cfg, o);
      const auto summary = run_scenario(cfg, cfg.output_dir, cfg.jobs);
      std::cout << "wrote " << cfg.seeds.size() << " seed records and summary to " << cfg.output_dir << "\n";
      (void)summary;
    } else if (*compare) {
      ExperimentConfig joint = load_config(config);
      apply(joint, o);
      ExperimentConfig base = joint;
      if (!baseline.empty()) {
        base = load_config(baseline);
        apply(base, o);
      } else {
        base.family.cls = "product";
        base.name = joint.name + "-product";
      }
      const auto table = compare_runs(joint, base, joint.output_dir, joint.jobs);
      std::cout << "joint <= baseline on " << table.at("joint_le_baseline").get<int>() << " of "
                << table.at("pairs").get<std::size_t>() << " seeds\n";
    } else if (*plots) {
      for (const fs::path& p : emit_plots(plots_dir)) std::cout << p.string() << "\n";
    } else if (*validate) {
      ExperimentConfig cfg = load_config(config);
      apply(cfg, o);
      const std::uint64_t cost = estimate_cost(cfg);
      check_budget(cfg);
      std::cout << "ok: " << to_string(cfg.scenario) << ", " << cfg.seeds.size() << " seeds, ~" << cost
                << " operations per seed (budget " << cfg.budget << ")\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
