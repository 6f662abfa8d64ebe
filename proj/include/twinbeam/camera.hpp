#pragma once

// Imaging spectrometer + EMCCD chain: maps the exit field onto a (theta,
// lambda) far-field image and turns photon images into 16-bit frames.
//
// Pixel convention: i indexes the spectral axis (columns, width) and j the
// angular axis (rows, height); images are row-major, index j * width + i.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinbeam/lattice.hpp"
#include "twinbeam/medium.hpp"

namespace twinbeam {

struct CameraSpec {
  std::size_t pixels_spectral = 64;
  std::size_t pixels_angular = 64;
  double lambda_min_m = 690e-9;
  double lambda_max_m = 706e-9;
  double theta_min_rad = -5e-3;
  double theta_max_rad = 5e-3;
  double quantum_efficiency = 0.9;
  double electrons_per_dn = 5.4;
  double dark_mean_dn = 100.0;
  double dark_sigma_dn = 3.0;
  bool em_excess_noise = false;
  unsigned bit_depth = 16;
  double optical_transmission = 1.0;

  void validate() const;

  double pixel_lambda() const noexcept;
  double pixel_theta() const noexcept;
  /// Excess-noise factor F of the gain register (2 with EM stage, else 1).
  double excess_noise_factor() const noexcept { return em_excess_noise ? 2.0 : 1.0; }
  std::uint32_t max_dn() const noexcept;
};

struct Pixel {
  std::size_t i = 0;  // spectral
  std::size_t j = 0;  // angular
  bool operator==(const Pixel&) const = default;
};

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h, fill) {}

  double& at(std::size_t i, std::size_t j) { return data[j * width + i]; }
  double at(std::size_t i, std::size_t j) const { return data[j * width + i]; }
  double sum() const;
};

struct FarFieldOptions {
  /// Photons removed from every lattice cell before mapping (0.5 undoes the
  /// symmetric-ordering vacuum); negative results are clipped to zero.
  double vacuum_offset = 0.0;
};

struct FarFieldResult {
  Image image;  // photons per pixel
  std::size_t clipped_cells = 0;
  double photons_in_window = 0.0;  // lattice photons whose (theta, lambda) lies in the window
};

/// Slit = q_y == 0 slice. Each (q_x, Omega) cell maps to theta = q_x / k(omega),
/// lambda = 2 pi c / omega, and its photons are deposited on the four nearest
/// pixel centres with bilinear weights, so photon counts are conserved.
FarFieldResult far_field_map(const ComplexLattice& a, const CrystalMedium& medium,
                             const CameraSpec& camera, const FarFieldOptions& options = {});

/// Pixel holding the degenerate wavelength at theta = 0.
Pixel degenerate_pixel(const CrystalMedium& medium, const CameraSpec& camera);

struct DetectionResult {
  std::vector<std::uint16_t> frame;
  std::size_t clipped_pixels = 0;
  std::size_t saturated_pixels = 0;
};

/// Poisson photo-electrons (mean eta * T * n), optional EM excess noise,
/// conversion to DN, Gaussian dark offset, rounding and clamping.
DetectionResult detect(const Image& photons, const CameraSpec& camera, std::uint64_t rng_seed);

struct FrameStack {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::vector<std::uint16_t>> frames;
  CameraSpec camera;
  Pixel center;
  nlohmann::json provenance = nlohmann::json::object();

  void validate() const;
};

/// One frame per exit field, detected with the matching seed.
FrameStack acquire_stack(const std::vector<ComplexLattice>& outputs, const CrystalMedium& medium,
                         const CameraSpec& camera, const std::vector<std::uint64_t>& seeds);

// "TBF1" stack file plus "<path>.json" sidecar holding camera and provenance.
void write_frame_stack(const std::filesystem::path& path, const FrameStack& stack);
FrameStack read_frame_stack(const std::filesystem::path& path);
void write_frame_stack_binary(std::ostream& out, const FrameStack& stack);
FrameStack read_frame_stack_binary(std::istream& in);

nlohmann::json to_json(const CameraSpec& camera);
CameraSpec camera_from_json(const nlohmann::json& j);

}  // namespace twinbeam
