#pragma once

// Pump-power sweep orchestration: per-power simulation and detection, stack
// analysis, report assembly and the on-disk layout shared by the CLI.
//
//   <out>/power_<P>mW/stack.tbf(.json)   detected frames
//   <out>/power_<P>mW/dark.tbf(.json)    dark frames, same camera
//   <out>/power_<P>mW/signal_exit.tbl    realization 0 exit fields
//   <out>/power_<P>mW/pump_exit.tbl
//   <out>/power_<P>mW/monitors.csv       realization 0
//   <out>/power_<P>mW/correlation_map.tbl(.json)
//   <out>/power_<P>mW/fragment.json      one report row
//   <out>/report.json, report.csv, plot_*.csv

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinbeam/analysis.hpp"
#include "twinbeam/camera.hpp"
#include "twinbeam/config.hpp"
#include "twinbeam/propagator.hpp"

namespace twinbeam {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Seed offsets relative to run.seed (vacuum seeds are run.seed + i).
inline constexpr std::uint64_t kDetectionSeedOffset = 1ULL << 32;
inline constexpr std::uint64_t kDarkSeedOffset = 2ULL << 32;

struct SeedStats {
  double mean = kNaN;
  double sigma = kNaN;  // spread over seeds
  std::size_t count = 0;
};

SeedStats seed_stats(const std::vector<double>& values);

struct AnalysisFragment {
  std::size_t frames = 0;
  double pixel_lambda_m = 0.0;
  double pixel_theta_rad = 0.0;
  // Lobe widths in pixels, averaged over all seeds of both arms.
  SeedStats auto_spectral_px, auto_angular_px, cross_spectral_px, cross_angular_px;
  SeedStats auto_peak_signal, cross_peak_signal, auto_peak_idler, cross_peak_idler;
  double cross_offset_px = kNaN;  // mean distance of the cross peak from the symmetric pixel
  G2Estimate g2_signal, g2_idler;
  double k_signal = kNaN, k_idler = kNaN, k = kNaN;
  double photons_detected = kNaN;
  double photons_sem = kNaN;
  double gamma_floor = kNaN;
  double dark_mean_dn = 0.0, dark_sigma_dn = 0.0;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const AnalysisFragment& f);
AnalysisFragment fragment_from_json(const nlohmann::json& j);

/// Correlation, width, g2 and photon pipeline on one stack. primary_map, when given, receives the
/// map of the central signal-arm seed.
AnalysisFragment analyze_stack(const FrameStack& stack, const DarkLevel& dark,
                               const AnalysisSection& analysis,
                               CorrelationMap* primary_map = nullptr);

struct PowerRun {
  double mean_power_mw = 0.0;
  double peak_power_w = 0.0;
  double gain = 0.0;  // sigma * b0 * L
  double transmission = 1.0;
  double lattice_photons = 0.0;  // ensemble mean, vacuum removed
  double lattice_photons_sem = 0.0;
  double conversion = 0.0;       // ensemble-mean fraction of pump photons converted
  std::size_t clipped_cells = 0;
  std::size_t saturated_pixels = 0;
  FrameStack stack;
  FrameStack dark;
  PumpDistributions pump_exit;
  PdcState first;  // realization 0
  std::vector<MonitorSample> monitors;
};

PowerRun simulate_power(const ExperimentConfig& config, double mean_power_mw, std::size_t workers);

struct PowerRecord {
  double mean_power_mw = 0.0;
  double peak_power_w = 0.0;
  double gain = kNaN;
  bool ok = false;
  std::string error;
  double transmission = kNaN;
  double lattice_photons = kNaN;
  double lattice_photons_sem = kNaN;
  double conversion = kNaN;
  std::size_t clipped_cells = 0;
  std::size_t saturated_pixels = 0;
  AnalysisFragment analysis;
  std::optional<DipMetrics> dip;
};

nlohmann::json to_json(const PowerRecord& r);
PowerRecord record_from_json(const nlohmann::json& j);

struct SweepReport {
  nlohmann::json metadata;
  std::vector<PowerRecord> records;
  nlohmann::json fits;
};

/// Fits and summary statistics over the records.
SweepReport assemble_report(const ExperimentConfig& config, std::vector<PowerRecord> records);

std::filesystem::path power_dir(const std::filesystem::path& out, double mean_power_mw);

void write_report(const SweepReport& report, const std::filesystem::path& out);

/// Exit codes of the command-line front end.
enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericAbort = 3, kIoError = 4 };

/// Simulates one power and writes its directory; returns the analysis row.
PowerRecord cmd_simulate(const ExperimentConfig& config, double mean_power_mw,
                         const std::filesystem::path& out, std::size_t workers,
                         std::ostream* log = nullptr);

/// All configured powers; failed powers are kept as rows with ok = false.
SweepReport cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out,
                      std::size_t workers, std::ostream* log = nullptr);

/// Re-analyzes a stack file (dark.tbf next to it is used when present).
AnalysisFragment cmd_analyze(const std::filesystem::path& stack_path, const ExperimentConfig& config,
                             const std::filesystem::path& out);

/// Rebuilds report files from the per-power fragments under `out`.
SweepReport cmd_report(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace twinbeam
