#pragma once

// Split-step pseudospectral integration of the degenerate type-I envelope
// equations
//
//   da/dz =  sigma   * b * conj(a) * exp(+i dk0 z)
//   db/dz = -sigma/2 * a^2         * exp(-i dk0 z)
//
// in a frame moving with the pump group velocity. a is the down-converted
// field (signal and idler are conjugate spectral regions of it), b the pump.
// Both are photon-normalized, so N_a + 2 N_b is a constant of the nonlinear
// motion. Quantum vacuum enters as half a photon of Gaussian noise per cell
// (stochastic Wigner input).

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "twinbeam/lattice.hpp"
#include "twinbeam/medium.hpp"

namespace twinbeam {

struct PumpPulse {
  double peak_amplitude = 0.0;  // sqrt(photons per cell) at the pulse centre
  double waist_m = 1e-3;        // 1/e^2 intensity radius
  double duration_s = 4.5e-12;  // intensity FWHM
  double chirp_per_s2 = 0.0;    // temporal phase chirp * t^2
};

struct RunConfig {
  double dz_m = 1e-4;
  PumpPulse pump;
  std::uint64_t noise_seed = 0;
  std::size_t realizations = 1;

  /// Number of steps through a crystal of the given length; throws unless
  /// length / dz is an integer >= 4.
  std::size_t steps(double length_m) const;
};

struct PropagationOptions {
  bool linear = true;                 // diffraction, dispersion and walk-off
  std::optional<double> coupling;     // overrides the sigma derived from d_eff
  std::size_t workers = 1;
};

struct PdcState {
  ComplexLattice a;  // down-converted field
  ComplexLattice b;  // pump
  double z = 0.0;
};

struct MonitorSample {
  double z = 0.0;
  double n_a = 0.0;
  double n_b = 0.0;
  double q = 0.0;
  cplx pump_on_axis{};
};

/// sigma in (m sqrt(photon))^-1 for the lattice cell volume of the table.
double nonlinear_coupling(const CrystalMedium& medium, const DispersionTable& table);

/// Peak amplitude of a Gaussian beam of the given peak power, in the
/// photons-per-cell normalization (the lattice is the y = 0 slice when ny = 1).
double pump_peak_amplitude(double peak_power_w, double waist_m, const LatticeSpec& spec,
                           const CrystalMedium& medium);

/// Independent complex Gaussian per cell with <|v|^2> = 1/2.
ComplexLattice seed_vacuum(const LatticeSpec& spec, std::uint64_t rng_seed);

/// Gaussian pulse centred on the grid (index n/2 on every axis).
ComplexLattice make_pump(const LatticeSpec& spec, const CrystalMedium& medium,
                         const PumpPulse& pulse);

/// Closed-form photon number of make_pump's pulse (continuous Gaussian integral).
double pump_photon_number_closed_form(const LatticeSpec& spec, const PumpPulse& pulse);

class SplitStepper {
 public:
  SplitStepper(const CrystalMedium& medium, const DispersionTable& table, double dz,
               const PropagationOptions& options = {});

  double dz() const noexcept { return dz_; }
  double coupling() const noexcept { return sigma_; }

  /// One symmetric step; lattices in and out of the real domain.
  PdcState step(const PdcState& state) const;

  /// Runs `count` steps starting from real-domain fields, keeping them in the
  /// spectral domain between steps (adjacent half steps are not merged).
  void run(PdcState& state, std::size_t count, std::vector<MonitorSample>* monitors) const;

 private:
  void linear_half(ComplexLattice& a, ComplexLattice& b) const;
  void nonlinear(ComplexLattice& a, ComplexLattice& b, double z_start) const;

  double dz_;
  double sigma_;
  double delta_k0_;
  bool linear_;
  AlignedVector<cplx> half_a_;
  AlignedVector<cplx> half_b_;
};

PdcState step(const PdcState& state, const CrystalMedium& medium, const DispersionTable& table,
              double dz, const PropagationOptions& options = {});

PdcState propagate(PdcState state, const CrystalMedium& medium, const DispersionTable& table,
                   const RunConfig& config, const PropagationOptions& options = {},
                   std::vector<MonitorSample>* monitors = nullptr);

/// Runs realization i with vacuum seed noise_seed + i and the shared pump.
/// The callback may be invoked concurrently from `options.workers` threads.
/// Monitors, when requested, are recorded for realization 0 only.
void for_each_realization(const CrystalMedium& medium, const DispersionTable& table,
                          const RunConfig& config, const PropagationOptions& options,
                          const std::function<void(std::size_t, PdcState&&)>& visit,
                          std::vector<MonitorSample>* first_monitors = nullptr);

std::vector<PdcState> run_ensemble(const CrystalMedium& medium, const DispersionTable& table,
                                   const RunConfig& config,
                                   const PropagationOptions& options = {});

/// Columns z, N_a, N_b, Q, pump_on_axis_re, pump_on_axis_im.
void write_monitor_csv(const std::filesystem::path& path,
                       const std::vector<MonitorSample>& samples);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace twinbeam
