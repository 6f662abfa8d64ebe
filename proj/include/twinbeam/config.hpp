#pragma once

// Experiment configuration file (JSON). Every physical quantity carries its SI
// unit in the key name, e.g. "waist_m", "dt_s", "mean_powers_mw".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinbeam/camera.hpp"
#include "twinbeam/lattice.hpp"
#include "twinbeam/medium.hpp"

namespace twinbeam {

struct PumpSection {
  double waist_m = 400e-6;
  double duration_s = 4.5e-12;
  double chirp_per_s2 = 0.0;
  std::vector<double> mean_powers_mw;
  double rep_rate_hz = 500.0;
};

struct RunSection {
  double dz_m = 125e-6;
  std::size_t realizations = 200;
  std::uint64_t seed = 1;
  std::size_t dark_frames = 200;
};

enum class WidthAxis { spectral, angular };

struct AnalysisSection {
  /// Seed-set centre relative to the centre pixel, signal arm (the idler set
  /// is its point reflection).
  std::size_t seed_offset_spectral_px = 8;
  std::size_t seed_offset_angular_px = 0;
  std::size_t seed_set_radius_px = 1;  // 1 -> 3 x 3 seeds
  std::size_t arm_margin_px = 4;
  std::size_t auto_search_radius_px = 1;
  std::size_t cross_search_radius_px = 16;
  std::size_t section_half_width_px = 8;
  double fwhm_baseline = 1.0;
  WidthAxis width_axis = WidthAxis::spectral;
  std::optional<double> fit_cut_mw;  // default: the power of maximum width
  double losses = 1.0;
  bool auto_attenuation = true;
  double target_peak_mean_dn = 2000.0;  // brightest ensemble-mean pixel after attenuation
};

struct ExperimentConfig {
  CrystalMedium medium = default_bbo();
  LatticeSpec lattice{64, 1, 256, 40e-6, 40e-6, 160e-15};
  PumpSection pump;
  RunSection run;
  CameraSpec camera;
  AnalysisSection analysis;
  std::string output_dir = "out";

  /// Throws ConfigError.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// sqrt(pi / (4 ln 2)): peak power of a Gaussian pulse is E / (shape * FWHM).
double gaussian_shape_factor();
double peak_power_w(const PumpSection& pump, double mean_power_mw);

}  // namespace twinbeam
