// twinbeam: batch front end for the PDC simulation and analysis pipeline.
//
//   twinbeam simulate --config desk.json --power 20 --out runs/
//   twinbeam sweep    --config desk.json --workers 4
//   twinbeam analyze  --config desk.json runs/power_0020.000mW/stack.tbf
//   twinbeam report   --config desk.json --out runs/
//
// TWINBEAM_WORKERS sets the default worker count.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "twinbeam/config.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/sweep.hpp"

namespace {

std::size_t default_workers() {
  if (const char* env = std::getenv("TWINBEAM_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring TWINBEAM_WORKERS=" << env << '\n';
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
  using namespace twinbeam;

  CLI::App app{"twin-beam PDC simulation, correlation analysis and sweep reports"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::size_t workers = default_workers();
  std::optional<std::uint64_t> seed;
  double power_mw = 0.0;
  std::string stack_path;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment configuration (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides output_dir)");
    cmd->add_option("--workers", workers, "worker threads (default: TWINBEAM_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "base random seed (overrides run.seed)");
  };
  auto* simulate = app.add_subcommand("simulate", "run one pump power and write its artifacts");
  common(simulate);
  simulate->add_option("--power", power_mw, "pump mean power (mW)")->required()->check(CLI::NonNegativeNumber);
  auto* sweep = app.add_subcommand("sweep", "simulate and analyze every configured power");
  common(sweep);
  auto* analyze = app.add_subcommand("analyze", "correlation analysis of a frame-stack file");
  common(analyze);
  analyze->add_option("stack", stack_path, "TBF1 frame stack")->required();
  auto* report = app.add_subcommand("report", "rebuild report files from per-power fragments");
  common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    ExperimentConfig config = load_config(config_path);
    if (seed) config.run.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;
    const std::filesystem::path out = config.output_dir;

    if (simulate->parsed()) {
      const auto rec = cmd_simulate(config, power_mw, out, workers, &std::cout);
      std::cout << "gain " << rec.gain << ", photons " << rec.analysis.photons_detected << ", K "
                << rec.analysis.k << '\n';
    } else if (sweep->parsed()) {
      const auto rep = cmd_sweep(config, out, workers, &std::cout);
      std::size_t failed = 0;
      for (const auto& r : rep.records) failed += r.ok ? 0 : 1;
      std::cout << "report: " << (out / "report.json").string() << '\n';
      if (failed) std::cerr << failed << " of " << rep.records.size() << " powers failed\n";
    } else if (analyze->parsed()) {
      const auto frag = cmd_analyze(stack_path, config, out);
      std::cout << "frames " << frag.frames << ", g2 " << frag.g2_signal.g2_corrected << ", K "
                << frag.k << '\n';
    } else if (report->parsed()) {
      cmd_report(config, out);
      std::cout << "report: " << (out / "report.json").string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << " at z = " << e.z()
              << " m (max |amplitude| " << e.max_magnitude() << ")\n";
    return kNumericAbort;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kIoError;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
