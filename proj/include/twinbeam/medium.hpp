#pragma once

// Uniaxial chi(2) crystal: Sellmeier indices, wave numbers, walk-off and the
// dispersion table used by the linear half of the split step.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "twinbeam/lattice.hpp"

namespace twinbeam {

namespace constants {
inline constexpr double c = 299792458.0;             // m/s
inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double epsilon0 = 8.8541878128e-12;  // F/m
}  // namespace constants

// n^2 = a + b / (L^2 - c) - d L^2 with L in micrometres.
struct SellmeierCoefficients {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double min_wavelength_m = 0.0;
  double max_wavelength_m = 0.0;

  double index(double wavelength_m) const;
};

enum class Polarization { ordinary, extraordinary_at_cut };

struct CrystalMedium {
  double length_m = 8e-3;
  double cut_angle_rad = 0.0;  // optic axis to propagation direction
  SellmeierCoefficients sellmeier_o;
  SellmeierCoefficients sellmeier_e;
  double deff_m_per_v = 2.0e-12;
  double pump_center_wavelength_m = 349e-9;
  double signal_center_wavelength_m = 698e-9;
  std::optional<double> walkoff_angle_rad;         // derived from the indices when unset
  std::optional<double> collinear_mismatch_per_m;  // k_p0 - 2 k_s0 when unset

  void validate() const;

  double pump_omega() const;
  double signal_omega() const;
};

/// Type-I beta-barium borate, 8 mm, cut at 37 deg, 349 nm -> 698 nm.
CrystalMedium default_bbo();

/// Published BBO Sellmeier sets (valid 0.22-1.06 um).
SellmeierCoefficients bbo_ordinary();
SellmeierCoefficients bbo_extraordinary();

double index(const CrystalMedium& medium, double wavelength_m, Polarization polarization);

/// k(omega) = n(omega) omega / c.
double wavenumber(const CrystalMedium& medium, double omega, Polarization polarization);

/// c / v_g, from a central difference of k(omega).
double group_index(const CrystalMedium& medium, double omega, Polarization polarization);

/// Poynting-vector walk-off of the extraordinary pump at the cut angle.
double derived_walkoff(const CrystalMedium& medium);
double effective_walkoff(const CrystalMedium& medium);

/// Phase mismatch k_p0 - 2 k_s0 at the carriers (or the configured override).
double collinear_mismatch(const CrystalMedium& medium);

struct FieldDispersion {
  Polarization polarization = Polarization::ordinary;
  double omega0 = 0.0;
  double k_carrier = 0.0;
  std::vector<double> kz;     // real part of sqrt(k^2 - q^2), per spectral cell
  std::vector<double> decay;  // |Im k_z| on evanescent cells, zero elsewhere
  std::vector<std::uint8_t> evanescent;

  std::size_t evanescent_cells() const;
};

struct DispersionTable {
  LatticeSpec spec;
  FieldDispersion pump;    // extraordinary at the cut angle
  FieldDispersion signal;  // ordinary
  double delta_k0 = 0.0;
  double walkoff = 0.0;
  double v_ref = 0.0;  // pump group velocity, frame of reference
};

DispersionTable build_dispersion(const CrystalMedium& medium, const LatticeSpec& spec);

}  // namespace twinbeam
