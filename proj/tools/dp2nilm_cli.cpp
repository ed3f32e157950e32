#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dp2nilm/exp/run.hpp"

namespace {

using namespace dp2nilm;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kShape: return 4;
    case ErrorKind::kNumeric: return 5;
    case ErrorKind::kIo: return 6;
  }
  return 1;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool sequential = false;
  std::size_t workers = 0;
  std::string format = "all";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "Override master_seed");
  cmd->add_option("--output-dir", c.output_dir,
                  "Output directory (overrides DP2NILM_OUTPUT_DIR and the config)");
  cmd->add_flag("--sequential", c.sequential, "Run clients one at a time");
  cmd->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
  cmd->add_option("--format", c.format, "Report files to write")
      ->check(CLI::IsMember({"csv", "json", "all"}));
}

exp::ExperimentConfig load(const Common& c) {
  auto cfg = exp::parse_config(c.config);
  if (c.seed) cfg.master_seed = *c.seed;
  if (const char* env = std::getenv("DP2NILM_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  return cfg;
}

void print_scores(const std::vector<std::string>& apps, const std::vector<metrics::Scores>& s) {
  std::cout << std::left << std::setw(18) << "appliance" << std::right << std::setw(10)
            << "accuracy" << std::setw(10) << "f1" << std::setw(10) << "precision"
            << std::setw(10) << "recall" << '\n';
  for (std::size_t a = 0; a < apps.size(); ++a) {
    std::cout << std::left << std::setw(18) << apps[a] << std::right << std::fixed
              << std::setprecision(4) << std::setw(10) << s[a].accuracy << std::setw(10)
              << s[a].f1 << std::setw(10) << s[a].precision << std::setw(10) << s[a].recall
              << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
}

int cmd_run(const Common& c) {
  const auto cfg = load(c);
  const auto report = exp::run_scenario(cfg, {c.sequential, c.workers});
  exp::write_report(report, cfg.output_dir, exp::parse_format(c.format));
  std::cout << "scenario " << report.scenario << "  rounds " << report.rounds_completed
            << (report.halted ? " (halted by privacy budget)" : "") << "  time "
            << std::setprecision(3) << report.wall_time_s << " s\n";
  print_scores(report.appliances, report.average);
  if (!report.attacks.empty()) {
    std::cout << "attack asr " << report.attack_mean.asr << "  tpr " << report.attack_mean.tpr
              << "  fpr " << report.attack_mean.fpr << '\n';
  }
  std::cout << "hash " << report.hash << "\nwrote " << cfg.output_dir << '\n';
  return 0;
}

std::pair<std::string, std::vector<double>> parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--axis must look like name=v1,v2,...");
  std::vector<double> values;
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad axis value '" + item + "'");
    }
  }
  if (values.empty()) throw ConfigError("--axis needs at least one value");
  return {spec.substr(0, eq), values};
}

int cmd_sweep(const Common& c, const std::string& axis_spec, const std::vector<std::string>& names) {
  const auto cfg = load(c);
  const auto [axis, values] = parse_axis(axis_spec);
  std::vector<exp::Scenario> scenarios;
  for (const auto& n : names) scenarios.push_back(exp::parse_scenario(n));
  const auto result = exp::sweep(cfg, axis, values, scenarios, {c.sequential, c.workers});
  exp::write_sweep(result, cfg.output_dir, exp::parse_format(c.format));
  std::cout << exp::sweep_csv(result) << "wrote " << cfg.output_dir << '\n';
  return 0;
}

int cmd_validate(const Common& c) {
  const auto cfg = load(c);
  std::cout << exp::config_to_json(cfg).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated NILM experiments with differential privacy"};
  app.require_subcommand(1);
  Common run_opts, sweep_opts, validate_opts;
  std::string axis;
  std::vector<std::string> scenarios;

  auto* run = app.add_subcommand("run", "Run one scenario and write its report");
  add_common(run, run_opts);
  auto* sw = app.add_subcommand("sweep", "Run a scenario over a list of parameter values");
  add_common(sw, sweep_opts);
  sw->add_option("--axis", axis, "Parameter and values, e.g. epsilon=4,8,12")->required();
  sw->add_option("--scenarios", scenarios, "Scenarios to include (default: the config's)")
      ->delimiter(',');
  auto* val = app.add_subcommand("validate", "Parse a config and print it with defaults filled in");
  val->add_option("config", validate_opts.config, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (sw->parsed()) return cmd_sweep(sweep_opts, axis, scenarios);
    return cmd_validate(validate_opts);
  } catch (const Error& e) {
    std::cerr << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
