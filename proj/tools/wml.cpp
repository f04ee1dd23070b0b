#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "wml/edge/data.hpp"
#include "wml/errors.hpp"
#include "wml/harness/harness.hpp"

namespace h = wml::harness;

namespace {

int cmd_run(const std::string& config_path, const std::string& experiment, std::vector<std::string> overrides,
            const std::string& seed, const std::string& out, bool print_config) {
  if (!experiment.empty()) overrides.insert(overrides.begin(), "run.experiment=" + experiment);
  if (!seed.empty()) overrides.push_back("run.seed=" + seed);
  if (!out.empty()) overrides.push_back("run.output=" + out);
  const h::ExperimentConfig cfg =
      config_path.empty() ? h::parse_config_text("", overrides) : h::load_config(config_path, overrides);
  cfg.validate();
  if (print_config) {
    std::cout << h::echo(cfg);
    return h::kExitOk;
  }
  const h::ExperimentRecord rec = h::run(cfg);
  h::write_record(rec, cfg.output_path());
  for (const auto& c : rec.curves) {
    std::cout << (cfg.output_path() / (c.name + ".csv")).string() << "  (" << c.points.size() << " points)\n";
  }
  std::printf("%s finished in %.1f s\n", h::to_string(cfg.experiment()).c_str(), rec.runtime_seconds);
  return h::kExitOk;
}

int cmd_compare(const std::string& a, const std::string& b, double tolerance) {
  const auto report = h::compare(h::read_record(a), h::read_record(b), tolerance);
  for (const auto& c : report.curves) {
    std::printf("%-24s max|dy| %.6g  %s\n", c.name.c_str(), c.max_abs_delta, c.passed ? "ok" : "FAIL");
  }
  std::printf("%s\n", report.passed() ? "PASS" : "FAIL");
  return report.passed() ? h::kExitOk : h::kExitFailure;
}

int cmd_mnist_check(const std::string& dir_arg) {
  const std::filesystem::path dir = dir_arg.empty() ? h::default_data_dir() : std::filesystem::path(dir_arg);
  const auto split = wml::edge::load_mnist(dir);
  std::printf("%s: %zu training and %zu test images\n", dir.string().c_str(), split.train.size(), split.test.size());
  return h::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wireless machine-learning experiments"};
  app.set_version_flag("--version", h::version());
  app.require_subcommand(1);

  std::string config_path, experiment, seed, out;
  std::vector<std::string> overrides;
  bool print_config = false;
  auto* run = app.add_subcommand("run", "run one experiment and write its curves as CSV");
  run->add_option("-c,--config", config_path, "config file of `section.key = value` lines")->check(CLI::ExistingFile);
  run->add_option("-e,--experiment", experiment, "outage | teamdc | edge | detect");
  run->add_option("-s,--set", overrides, "override, section.key=value (repeatable)");
  run->add_option("--seed", seed, "shorthand for --set run.seed=N");
  run->add_option("-o,--out", out, "output directory (run.output)");
  run->add_flag("--print-config", print_config, "print the resolved config and exit");

  std::string rec_a, rec_b;
  double tolerance = 0.0;
  auto* cmp = app.add_subcommand("compare", "compare two record directories curve by curve");
  cmp->add_option("a", rec_a)->required();
  cmp->add_option("b", rec_b)->required();
  cmp->add_option("-t,--tolerance", tolerance, "max allowed |dy|")->capture_default_str();

  std::vector<int> criteria;
  bool verbose = false;
  auto* accept = app.add_subcommand("accept", "run the acceptance suite");
  accept->add_option("-c,--criterion", criteria, "criteria to run (default: all)")->check(CLI::Range(1, 6));
  accept->add_flag("-v,--verbose", verbose);

  std::string data_dir;
  auto* mnist = app.add_subcommand("mnist-fetch-check", "validate the MNIST IDX files (never downloads)");
  mnist->add_option("-d,--dir", data_dir, "directory (default: $WML_DATA_DIR or ./data/mnist)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, experiment, overrides, seed, out, print_config);
    if (*cmp) return cmd_compare(rec_a, rec_b, tolerance);
    if (*accept) return wml::acceptance::run_suite(criteria, verbose) == 0 ? h::kExitOk : h::kExitFailure;
    if (*mnist) return cmd_mnist_check(data_dir);
  } catch (const wml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kExitConfig;
  } catch (const wml::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return h::kExitDivergence;
  } catch (const wml::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return h::kExitDataset;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kExitFailure;
  }
  return h::kExitFailure;
}
