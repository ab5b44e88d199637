// Command-line experiment runner. Subcommands:
//   interpolate      train a network on a benchmark function or dataset file
//   pinn-burgers     solve the inverse viscous Burgers problem
//   gen-burgers-ref  generate the analytic reference-solution grid
//   gen-data         generate the bundled synthetic datasets
//   suite            run a benchmark grid and collect a results table
// Each takes --config <path> plus any number of --set key=value overrides.
// Exit codes: 0 success, 2 configuration/usage error, 3 training failure.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "presnet/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;

void print_usage(std::FILE* to) {
  std::fprintf(
      to,
      "usage: presnet <subcommand> --config <path> [--set key=value]...\n"
      "\n"
      "subcommands:\n"
      "  interpolate      train on a benchmark function or dataset file\n"
      "  pinn-burgers     inverse viscous Burgers coefficient estimation\n"
      "  gen-burgers-ref  write the analytic reference-solution CSV\n"
      "  gen-data         write the bundled synthetic datasets\n"
      "  suite            run a benchmark grid, one row per combination\n"
      "\n"
      "exit codes: 0 success, 2 config/usage error, 3 training failure\n");
}

void print_summary(const presnet::RunResult& run) {
  const auto& entries = run.manifest.entries;
  std::printf("status: %s\n", run.manifest.at("status").c_str());
  for (const char* key :
       {"stop_reason", "iterations", "metric.train_mse", "metric.val_rel_l2",
        "metric.val_max_abs", "lambda.l1", "lambda.l2",
        "lambda.pct_error_l1", "lambda.pct_error_l2", "suite.rows",
        "suite.failed_rows", "data.n_reference", "data.n_points"}) {
    const auto it = entries.find(key);
    if (it != entries.end())
      std::printf("%s: %s\n", key, it->second.c_str());
  }
  std::printf("manifest: %s\n", run.manifest_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h" ||
      args[0] == "help") {
    print_usage(args.empty() ? stderr : stdout);
    return args.empty() ? kExitConfig : kExitOk;
  }

  const std::string subcommand = args[0];
  std::string config_path;
  std::vector<std::string> overrides;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) {
        std::fprintf(stderr, "error: --config expects a path\n");
        return kExitConfig;
      }
      config_path = args[++i];
    } else if (args[i] == "--set") {
      if (i + 1 >= args.size()) {
        std::fprintf(stderr, "error: --set expects key=value\n");
        return kExitConfig;
      }
      overrides.push_back(args[++i]);
    } else {
      std::fprintf(stderr, "error: unknown argument '%s'\n", args[i].c_str());
      print_usage(stderr);
      return kExitConfig;
    }
  }
  if (config_path.empty()) {
    std::fprintf(stderr, "error: --config <path> is required\n");
    return kExitConfig;
  }

  try {
    presnet::ExperimentConfig cfg = presnet::load_config_file(config_path);
    for (const std::string& s : overrides) presnet::apply_override(cfg, s);

    presnet::RunResult run;
    if (subcommand == "interpolate") {
      run = presnet::run_interpolate(cfg);
    } else if (subcommand == "pinn-burgers") {
      run = presnet::run_pinn(cfg);
    } else if (subcommand == "gen-burgers-ref") {
      run = presnet::run_gen_burgers_ref(cfg);
    } else if (subcommand == "gen-data") {
      run = presnet::run_gen_data(cfg);
    } else if (subcommand == "suite") {
      run = presnet::run_suite(cfg);
    } else {
      std::fprintf(stderr, "error: unknown subcommand '%s'\n",
                   subcommand.c_str());
      print_usage(stderr);
      return kExitConfig;
    }

    print_summary(run);
    return run.failed() ? kExitTraining : kExitOk;
  } catch (const presnet::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const presnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}
