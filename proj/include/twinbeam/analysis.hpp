#pragma once

// Frame-stack statistics: dark subtraction, intensity correlation maps
// Gamma(p) = <I_s I_p> / (<I_s><I_p>), lobe widths, g2 / mode number and the
// photon calibration, plus exit-pump depletion diagnostics.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "twinbeam/camera.hpp"
#include "twinbeam/lattice.hpp"

namespace twinbeam {

/// Dark-subtracted frames (DN, may be negative).
struct RealFrames {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::vector<double>> frames;

  std::size_t pixels() const noexcept { return width * height; }
  void validate() const;
};

RealFrames dark_subtract(const FrameStack& stack, double dark_dn);
RealFrames dark_subtract(const FrameStack& stack, const std::vector<double>& dark_map);

/// Mean over frames and pixels, and the per-pixel standard deviation pooled
/// over the stack (for dark frames).
struct DarkLevel {
  double mean_dn = 0.0;
  double sigma_dn = 0.0;
};
DarkLevel measure_dark(const FrameStack& dark_frames);

/// Per-pixel means, summed in frame order.
std::vector<double> frame_means(const RealFrames& frames);

/// Additive per-pixel noise in DN^2: var = sigma_dark^2 + quantization + F * <I> / g,
/// where g = electrons_per_dn. A default-constructed model is noiseless.
struct DetectorNoise {
  double dark_sigma_dn = 0.0;
  double electrons_per_dn = 0.0;  // 0 disables the shot-noise term
  double excess_noise_factor = 1.0;
  double quantization_dn2 = 0.0;

  static DetectorNoise from_camera(const CameraSpec& camera, double measured_dark_sigma_dn);
  double variance(double mean_dn) const noexcept;
};

struct Peak {
  Pixel pixel;
  double value = 0.0;
};

/// 1D cut through a peak; sample k sits at pixel coordinate origin + k.
struct Section {
  std::vector<double> profile;
  std::size_t origin = 0;
  std::size_t peak_index = 0;  // sample index of the peak pixel
  double step = 1.0;           // physical units per pixel
};

struct CorrelationMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> gamma;
  std::vector<std::uint8_t> flagged;  // <I> <= 0 at this pixel; gamma set to 1
  Pixel seed;
  Pixel symmetric;  // point reflection of the seed about the centre pixel
  Peak auto_peak;
  Peak cross_peak;
  Section auto_spectral, auto_angular, cross_spectral, cross_angular;

  double at(std::size_t i, std::size_t j) const { return gamma[j * width + i]; }
};

struct GammaOptions {
  std::size_t auto_search_radius = 1;
  std::size_t cross_search_radius = 16;
  std::size_t section_half_width = 8;
  double pixel_lambda = 1.0;
  double pixel_theta = 1.0;
  /// When set, the seed sample of the auto sections uses the noise-corrected
  /// g2 instead of the raw value (removes the shot/dark spike).
  std::optional<DetectorNoise> noise;
};

CorrelationMap gamma_map(const RealFrames& frames, Pixel seed, Pixel center,
                         const GammaOptions& options = {});

struct Width {
  double pixels = 0.0;
  double physical = 0.0;
};

/// Distance between the half-maximum crossings of (profile - baseline) on
/// either side of its maximum, by linear interpolation. Throws
/// AnalysisError("no crossing") or AnalysisError("multiple lobes ...").
Width fwhm_of_section(const std::vector<double>& profile, double baseline = 1.0, double step = 1.0);
Width fwhm_of_section(const Section& section, double baseline = 1.0);

/// Inclusive-exclusive pixel rectangle.
struct Region {
  std::size_t i_begin = 0, i_end = 0;
  std::size_t j_begin = 0, j_end = 0;

  bool empty() const noexcept { return i_begin >= i_end || j_begin >= j_end; }
  std::size_t size() const noexcept { return empty() ? 0 : (i_end - i_begin) * (j_end - j_begin); }
};

enum class Arm { signal, idler };

/// Half-plane on one side of the centre column (signal: shorter wavelengths,
/// i < center.i), leaving out `margin` columns next to it.
Region arm_region(Pixel center, std::size_t width, std::size_t height, Arm arm, std::size_t margin);

struct G2Estimate {
  double g2_raw = 0.0;
  double g2_corrected = 0.0;
  double mean_dn = 0.0;  // region average of <I>
};

G2Estimate g2_estimate(const RealFrames& frames, const Region& region,
                       const DetectorNoise& noise = {});

/// K = 1 / (g2 - 1).
double mode_count(double g2);

/// Photons for a dark-subtracted DN level.
double photons_from_dn(double dn_excess, const CameraSpec& camera, double losses = 1.0);

/// Mean photons per frame summed over the region.
double photons_from_dn(const RealFrames& frames, const CameraSpec& camera, double losses,
                       const Region& region);

/// Pump intensity distributions in the y-centre plane.
struct PumpDistributions {
  LatticeSpec spec;
  std::size_t samples = 0;             // lattices accumulated
  std::vector<double> spectral_map;    // |FFT_t b|^2 (x, Omega), Omega ascending, row per x
  std::vector<double> fluence;         // sum_t |b|^2 over (x, y), row-major y then x

  void add(const ComplexLattice& pump);
};

PumpDistributions pump_distributions(const ComplexLattice& pump);

struct DipMetrics {
  double central_depth = 0.0;          // relative change of the normalized fluence at the reference peak
  std::optional<double> fwhm_m;        // half-depth width of the region below the reference; empty when none
  double lateral_offset_m = 0.0;       // dip minimum relative to the reference peak
};

struct PumpProfiles {
  std::vector<double> spectral_section;   // at beam centre, peak-normalized
  std::vector<double> spatial_section;    // along x at y centre, area-normalized
  std::vector<double> omega_axis;         // rad/s, ascending
  std::vector<double> x_axis;             // m
  std::vector<double> diff_spectral_map;  // peak-normalized (x, Omega) minus reference
  std::vector<double> diff_spatial_map;   // area-normalized fluence minus reference
  DipMetrics dip;
};

PumpProfiles pump_profiles(const PumpDistributions& pump, const PumpDistributions& reference);
PumpProfiles pump_profiles(const ComplexLattice& pump_exit, const ComplexLattice& reference);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace twinbeam
