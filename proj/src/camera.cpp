#include "twinbeam/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "twinbeam/errors.hpp"

namespace twinbeam {

void CameraSpec::validate() const {
  if (pixels_spectral == 0 || pixels_angular == 0) throw ContractError("camera has no pixels");
  if (!(lambda_max_m > lambda_min_m && lambda_min_m > 0.0)) {
    throw ContractError("camera wavelength window is empty");
  }
  if (!(theta_max_rad > theta_min_rad)) throw ContractError("camera angle window is empty");
  if (!(quantum_efficiency > 0.0 && quantum_efficiency <= 1.0)) {
    throw ContractError("quantum efficiency must lie in (0, 1]");
  }
  if (!(electrons_per_dn > 0.0)) throw ContractError("electrons per DN must be positive");
  if (!(optical_transmission > 0.0 && optical_transmission <= 1.0)) {
    throw ContractError("optical transmission must lie in (0, 1]");
  }
  if (dark_sigma_dn < 0.0) throw ContractError("dark sigma must be non-negative");
  if (bit_depth == 0 || bit_depth > 16) throw ContractError("bit depth must lie in [1, 16]");
}

double CameraSpec::pixel_lambda() const noexcept {
  return (lambda_max_m - lambda_min_m) / static_cast<double>(pixels_spectral);
}

double CameraSpec::pixel_theta() const noexcept {
  return (theta_max_rad - theta_min_rad) / static_cast<double>(pixels_angular);
}

std::uint32_t CameraSpec::max_dn() const noexcept { return (1U << bit_depth) - 1U; }

double Image::sum() const {
  double s = 0.0;
  for (double v : data) s += v;
  return s;
}

FarFieldResult far_field_map(const ComplexLattice& a, const CrystalMedium& medium,
                             const CameraSpec& camera, const FarFieldOptions& options) {
  camera.validate();
  if (a.domain() != Domain::real) throw ContractError("far_field_map: field must be in real domain");
  const auto& s = a.spec();
  const ComplexLattice spectrum = to_spectral(a);
  const auto qx = spectral_axis(s.nx, s.dx);
  const auto omega = spectral_axis(s.nt, s.dt);
  const double omega0 = medium.signal_omega();

  // Simulated (theta, lambda) coverage.
  const double omega_lo = omega0 + *std::min_element(omega.begin(), omega.end());
  const double omega_hi = omega0 + *std::max_element(omega.begin(), omega.end());
  if (!(omega_lo > 0.0)) throw ContractError("lattice bandwidth reaches non-positive frequencies");
  const double lambda_sim_min = 2.0 * std::numbers::pi * constants::c / omega_hi;
  const double lambda_sim_max = 2.0 * std::numbers::pi * constants::c / omega_lo;
  const double q_max = *std::max_element(qx.begin(), qx.end());
  const double theta_sim = q_max / wavenumber(medium, omega_hi, Polarization::ordinary);
  if (camera.lambda_min_m < lambda_sim_min || camera.lambda_max_m > lambda_sim_max ||
      camera.theta_min_rad < -theta_sim || camera.theta_max_rad > theta_sim) {
    std::ostringstream msg;
    msg << "camera window outside simulated bandwidth (lambda [" << lambda_sim_min << ", "
        << lambda_sim_max << "] m, theta +-" << theta_sim << " rad)";
    throw ContractError(msg.str());
  }

  FarFieldResult result;
  result.image = Image(camera.pixels_spectral, camera.pixels_angular);
  const auto width = static_cast<std::ptrdiff_t>(camera.pixels_spectral);
  const auto height = static_cast<std::ptrdiff_t>(camera.pixels_angular);
  const double dl = camera.pixel_lambda();
  const double dth = camera.pixel_theta();

  for (std::size_t it = 0; it < s.nt; ++it) {
    const double w = omega0 + omega[it];
    const double lambda = 2.0 * std::numbers::pi * constants::c / w;
    if (lambda < camera.lambda_min_m || lambda >= camera.lambda_max_m) continue;
    const double k = wavenumber(medium, w, Polarization::ordinary);
    const double u = (lambda - camera.lambda_min_m) / dl - 0.5;
    const auto i0 = static_cast<std::ptrdiff_t>(std::floor(u));
    const double fu = u - static_cast<double>(i0);
    for (std::size_t ix = 0; ix < s.nx; ++ix) {
      const double theta = qx[ix] / k;
      if (theta < camera.theta_min_rad || theta >= camera.theta_max_rad) continue;
      double photons = std::norm(spectrum.at(ix, 0, it)) - options.vacuum_offset;
      if (photons < 0.0) {
        photons = 0.0;
        ++result.clipped_cells;
      }
      result.photons_in_window += photons;
      const double v = (theta - camera.theta_min_rad) / dth - 0.5;
      const auto j0 = static_cast<std::ptrdiff_t>(std::floor(v));
      const double fv = v - static_cast<double>(j0);
      // Edge pixels absorb the out-of-range half of the hat so nothing leaks.
      const auto ci = [&](std::ptrdiff_t i) { return std::clamp<std::ptrdiff_t>(i, 0, width - 1); };
      const auto cj = [&](std::ptrdiff_t j) { return std::clamp<std::ptrdiff_t>(j, 0, height - 1); };
      auto& img = result.image;
      img.at(ci(i0), cj(j0)) += photons * (1.0 - fu) * (1.0 - fv);
      img.at(ci(i0 + 1), cj(j0)) += photons * fu * (1.0 - fv);
      img.at(ci(i0), cj(j0 + 1)) += photons * (1.0 - fu) * fv;
      img.at(ci(i0 + 1), cj(j0 + 1)) += photons * fu * fv;
    }
  }
  return result;
}

Pixel degenerate_pixel(const CrystalMedium& medium, const CameraSpec& camera) {
  const double u = (medium.signal_center_wavelength_m - camera.lambda_min_m) / camera.pixel_lambda();
  const double v = (0.0 - camera.theta_min_rad) / camera.pixel_theta();
  if (u < 0.0 || v < 0.0 || u >= static_cast<double>(camera.pixels_spectral) ||
      v >= static_cast<double>(camera.pixels_angular)) {
    throw ContractError("degenerate wavelength / collinear direction outside the camera window");
  }
  return {static_cast<std::size_t>(u), static_cast<std::size_t>(v)};
}

DetectionResult detect(const Image& photons, const CameraSpec& camera, std::uint64_t rng_seed) {
  camera.validate();
  if (photons.width != camera.pixels_spectral || photons.height != camera.pixels_angular) {
    throw ContractError("detect: image size does not match camera");
  }
  DetectionResult out;
  out.frame.resize(photons.data.size());
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> dark(camera.dark_mean_dn, camera.dark_sigma_dn);
  const double throughput = camera.quantum_efficiency * camera.optical_transmission;
  const double max_dn = camera.max_dn();
  for (std::size_t k = 0; k < photons.data.size(); ++k) {
    double n = photons.data[k];
    if (n < 0.0) {
      n = 0.0;
      ++out.clipped_pixels;
    }
    const double mean_electrons = throughput * n;
    double electrons = 0.0;
    if (mean_electrons > 0.0) {
      std::poisson_distribution<long long> shot(mean_electrons);
      electrons = static_cast<double>(shot(rng));
    }
    if (camera.em_excess_noise && electrons > 0.0) {
      // Gamma(e, 1) adds variance e, doubling the Poisson variance overall.
      std::gamma_distribution<double> register_gain(electrons, 1.0);
      electrons = register_gain(rng);
    }
    double dn = std::round(electrons / camera.electrons_per_dn + dark(rng));
    if (dn > max_dn) {
      dn = max_dn;
      ++out.saturated_pixels;
    }
    out.frame[k] = static_cast<std::uint16_t>(std::max(0.0, dn));
  }
  return out;
}

void FrameStack::validate() const {
  for (const auto& f : frames) {
    if (f.size() != width * height) throw ContractError("frame dimensions differ within stack");
  }
  if (width && height && (center.i >= width || center.j >= height)) {
    throw ContractError("center pixel outside image");
  }
}

FrameStack acquire_stack(const std::vector<ComplexLattice>& outputs, const CrystalMedium& medium,
                         const CameraSpec& camera, const std::vector<std::uint64_t>& seeds) {
  if (outputs.empty()) throw ContractError("acquire_stack: need at least one output");
  if (seeds.size() != outputs.size()) throw ContractError("acquire_stack: one seed per output");
  FrameStack stack;
  stack.width = camera.pixels_spectral;
  stack.height = camera.pixels_angular;
  stack.camera = camera;
  stack.center = degenerate_pixel(medium, camera);
  stack.frames.reserve(outputs.size());
  std::size_t clipped = 0;
  for (std::size_t r = 0; r < outputs.size(); ++r) {
    auto ff = far_field_map(outputs[r], medium, camera, {.vacuum_offset = 0.5});
    clipped += ff.clipped_cells;
    stack.frames.push_back(detect(ff.image, camera, seeds[r]).frame);
  }
  stack.provenance["detection_seeds"] = seeds;
  stack.provenance["clipped_cells"] = clipped;
  return stack;
}

nlohmann::json to_json(const CameraSpec& c) {
  return {{"pixels_spectral", c.pixels_spectral},
          {"pixels_angular", c.pixels_angular},
          {"lambda_min_m", c.lambda_min_m},
          {"lambda_max_m", c.lambda_max_m},
          {"theta_min_rad", c.theta_min_rad},
          {"theta_max_rad", c.theta_max_rad},
          {"quantum_efficiency", c.quantum_efficiency},
          {"electrons_per_dn", c.electrons_per_dn},
          {"dark_mean_dn", c.dark_mean_dn},
          {"dark_sigma_dn", c.dark_sigma_dn},
          {"em_excess_noise", c.em_excess_noise},
          {"bit_depth", c.bit_depth},
          {"optical_transmission", c.optical_transmission}};
}

CameraSpec camera_from_json(const nlohmann::json& j) {
  CameraSpec c;
  c.pixels_spectral = j.value("pixels_spectral", c.pixels_spectral);
  c.pixels_angular = j.value("pixels_angular", c.pixels_angular);
  c.lambda_min_m = j.value("lambda_min_m", c.lambda_min_m);
  c.lambda_max_m = j.value("lambda_max_m", c.lambda_max_m);
  c.theta_min_rad = j.value("theta_min_rad", c.theta_min_rad);
  c.theta_max_rad = j.value("theta_max_rad", c.theta_max_rad);
  c.quantum_efficiency = j.value("quantum_efficiency", c.quantum_efficiency);
  c.electrons_per_dn = j.value("electrons_per_dn", c.electrons_per_dn);
  c.dark_mean_dn = j.value("dark_mean_dn", c.dark_mean_dn);
  c.dark_sigma_dn = j.value("dark_sigma_dn", c.dark_sigma_dn);
  c.em_excess_noise = j.value("em_excess_noise", c.em_excess_noise);
  c.bit_depth = j.value("bit_depth", c.bit_depth);
  c.optical_transmission = j.value("optical_transmission", c.optical_transmission);
  return c;
}

void write_frame_stack_binary(std::ostream& out, const FrameStack& stack) {
  stack.validate();
  out.write("TBF1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(stack.frames.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.height));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.width));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.center.i));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.center.j));
  detail::put_f64(out, stack.camera.lambda_min_m);
  detail::put_f64(out, stack.camera.lambda_max_m);
  detail::put_f64(out, stack.camera.theta_min_rad);
  detail::put_f64(out, stack.camera.theta_max_rad);
  for (const auto& frame : stack.frames) {
    for (auto v : frame) detail::put_u16(out, v);
  }
  if (!out) throw IoError("failed writing frame stack");
}

FrameStack read_frame_stack_binary(std::istream& in) {
  detail::Reader reader(in);
  reader.expect_magic("TBF1");
  FrameStack stack;
  const std::uint32_t count = reader.u32("frame_count");
  stack.height = reader.u32("height");
  stack.width = reader.u32("width");
  stack.center.i = reader.u32("center_i");
  stack.center.j = reader.u32("center_j");
  stack.camera.lambda_min_m = reader.f64("lambda_min");
  stack.camera.lambda_max_m = reader.f64("lambda_max");
  stack.camera.theta_min_rad = reader.f64("theta_min");
  stack.camera.theta_max_rad = reader.f64("theta_max");
  stack.camera.pixels_spectral = stack.width;
  stack.camera.pixels_angular = stack.height;
  if (stack.width == 0 || stack.height == 0) throw FormatError("empty frame dimensions", 8);
  if (stack.center.i >= stack.width || stack.center.j >= stack.height) {
    throw FormatError("center pixel outside image", 20);
  }
  const std::size_t pixels = stack.width * stack.height;
  std::vector<char> raw(pixels * 2);
  stack.frames.resize(count);
  for (auto& frame : stack.frames) {
    reader.read_bytes(raw.data(), raw.size(), "frame data");
    frame.resize(pixels);
    for (std::size_t k = 0; k < pixels; ++k) {
      frame[k] = static_cast<std::uint16_t>(static_cast<unsigned char>(raw[2 * k]) |
                                            (static_cast<unsigned char>(raw[2 * k + 1]) << 8));
    }
  }
  return stack;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void write_frame_stack(const std::filesystem::path& path, const FrameStack& stack) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_frame_stack_binary(out, stack);
  }
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw IoError("cannot open sidecar for " + path.string());
  nlohmann::json j{{"camera", to_json(stack.camera)}, {"provenance", stack.provenance}};
  side << j.dump(2) << '\n';
}

FrameStack read_frame_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  FrameStack stack = read_frame_stack_binary(in);
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream sin(side);
    nlohmann::json j;
    try {
      sin >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed sidecar JSON: ") + e.what(), 0);
    }
    CameraSpec cam = camera_from_json(j.value("camera", nlohmann::json::object()));
    if (cam.pixels_spectral != stack.width || cam.pixels_angular != stack.height) {
      throw FormatError("sidecar camera dimensions disagree with stack header", 8);
    }
    stack.camera = cam;
    stack.provenance = j.value("provenance", nlohmann::json::object());
  }
  return stack;
}

}  // namespace twinbeam
