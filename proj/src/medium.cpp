#include "twinbeam/medium.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "twinbeam/errors.hpp"

namespace twinbeam {

double SellmeierCoefficients::index(double wavelength_m) const {
  if (!(wavelength_m >= min_wavelength_m && wavelength_m <= max_wavelength_m)) {
    std::ostringstream msg;
    msg << "wavelength " << wavelength_m << " m outside Sellmeier validity window ["
        << min_wavelength_m << ", " << max_wavelength_m << "]";
    throw ContractError(msg.str());
  }
  const double l2 = (wavelength_m * 1e6) * (wavelength_m * 1e6);
  const double n2 = a + b / (l2 - c) - d * l2;
  if (!(n2 > 0.0)) throw ContractError("Sellmeier formula gives non-positive n^2");
  return std::sqrt(n2);
}

SellmeierCoefficients bbo_ordinary() { return {2.7359, 0.01878, 0.01822, 0.01354, 0.22e-6, 1.06e-6}; }

SellmeierCoefficients bbo_extraordinary() {
  return {2.3753, 0.01224, 0.01667, 0.01516, 0.22e-6, 1.06e-6};
}

CrystalMedium default_bbo() {
  CrystalMedium m;
  m.length_m = 8e-3;
  m.cut_angle_rad = 37.0 * std::numbers::pi / 180.0;
  m.sellmeier_o = bbo_ordinary();
  m.sellmeier_e = bbo_extraordinary();
  m.deff_m_per_v = 2.0e-12;
  m.pump_center_wavelength_m = 349e-9;
  m.signal_center_wavelength_m = 698e-9;
  return m;
}

double CrystalMedium::pump_omega() const {
  return 2.0 * std::numbers::pi * constants::c / pump_center_wavelength_m;
}

double CrystalMedium::signal_omega() const {
  return 2.0 * std::numbers::pi * constants::c / signal_center_wavelength_m;
}

void CrystalMedium::validate() const {
  if (!(length_m > 0.0)) throw ContractError("crystal length must be positive");
  if (!(cut_angle_rad > 0.0 && cut_angle_rad < std::numbers::pi / 2)) {
    throw ContractError("cut angle must lie in (0, pi/2)");
  }
  if (!(pump_center_wavelength_m > 0.0)) throw ContractError("pump wavelength must be positive");
  if (std::abs(signal_center_wavelength_m - 2.0 * pump_center_wavelength_m) >
      1e-12 * signal_center_wavelength_m) {
    throw ContractError("degenerate model requires signal wavelength = 2 x pump wavelength");
  }
  for (const auto* s : {&sellmeier_o, &sellmeier_e}) {
    if (!(s->max_wavelength_m > s->min_wavelength_m && s->min_wavelength_m > 0.0)) {
      throw ContractError("Sellmeier validity window is empty");
    }
    constexpr int samples = 64;
    for (int k = 0; k <= samples; ++k) {
      const double lambda =
          s->min_wavelength_m + (s->max_wavelength_m - s->min_wavelength_m) * k / samples;
      if (!(s->index(lambda) > 1.0)) throw ContractError("Sellmeier index <= 1 inside window");
    }
  }
}

double index(const CrystalMedium& medium, double wavelength_m, Polarization polarization) {
  const double no = medium.sellmeier_o.index(wavelength_m);
  if (polarization == Polarization::ordinary) return no;
  const double ne = medium.sellmeier_e.index(wavelength_m);
  const double c2 = std::cos(medium.cut_angle_rad);
  const double s2 = std::sin(medium.cut_angle_rad);
  const double inv_n2 = c2 * c2 / (no * no) + s2 * s2 / (ne * ne);
  return 1.0 / std::sqrt(inv_n2);
}

double wavenumber(const CrystalMedium& medium, double omega, Polarization polarization) {
  if (!(omega > 0.0)) throw ContractError("angular frequency must be positive");
  const double lambda = 2.0 * std::numbers::pi * constants::c / omega;
  return index(medium, lambda, polarization) * omega / constants::c;
}

double group_index(const CrystalMedium& medium, double omega, Polarization polarization) {
  const double h = 1e-4 * omega;
  const double dk = wavenumber(medium, omega + h, polarization) -
                    wavenumber(medium, omega - h, polarization);
  return constants::c * dk / (2.0 * h);
}

double derived_walkoff(const CrystalMedium& medium) {
  const double no = medium.sellmeier_o.index(medium.pump_center_wavelength_m);
  const double ne = medium.sellmeier_e.index(medium.pump_center_wavelength_m);
  const double ratio = (no * no) / (ne * ne);
  const double t = std::tan(medium.cut_angle_rad);
  return std::atan((ratio - 1.0) * t / (1.0 + ratio * t * t));
}

double effective_walkoff(const CrystalMedium& medium) {
  return medium.walkoff_angle_rad.value_or(derived_walkoff(medium));
}

double collinear_mismatch(const CrystalMedium& medium) {
  if (medium.collinear_mismatch_per_m) return *medium.collinear_mismatch_per_m;
  const double kp = wavenumber(medium, medium.pump_omega(), Polarization::extraordinary_at_cut);
  const double ks = wavenumber(medium, medium.signal_omega(), Polarization::ordinary);
  return kp - 2.0 * ks;
}

std::size_t FieldDispersion::evanescent_cells() const {
  std::size_t n = 0;
  for (auto e : evanescent) n += e;
  return n;
}

namespace {

FieldDispersion tabulate(const CrystalMedium& medium, const LatticeSpec& spec, double omega0,
                         Polarization polarization) {
  FieldDispersion f;
  f.polarization = polarization;
  f.omega0 = omega0;
  f.k_carrier = wavenumber(medium, omega0, polarization);

  const auto qx = spectral_axis(spec.nx, spec.dx);
  const auto qy = spectral_axis(spec.ny, spec.dy);
  const auto omega = spectral_axis(spec.nt, spec.dt);
  std::vector<double> k2(spec.nt);
  for (std::size_t it = 0; it < spec.nt; ++it) {
    const double k = wavenumber(medium, omega0 + omega[it], polarization);
    k2[it] = k * k;
  }

  f.kz.assign(spec.cells(), 0.0);
  f.decay.assign(spec.cells(), 0.0);
  f.evanescent.assign(spec.cells(), 0);
  for (std::size_t iy = 0; iy < spec.ny; ++iy) {
    for (std::size_t ix = 0; ix < spec.nx; ++ix) {
      const double q2 = qx[ix] * qx[ix] + qy[iy] * qy[iy];
      for (std::size_t it = 0; it < spec.nt; ++it) {
        const std::size_t idx = (iy * spec.nx + ix) * spec.nt + it;
        const double arg = k2[it] - q2;
        if (arg >= 0.0) {
          f.kz[idx] = std::sqrt(arg);
        } else {
          f.decay[idx] = std::sqrt(-arg);
          f.evanescent[idx] = 1;
        }
      }
    }
  }
  return f;
}

}  // namespace

DispersionTable build_dispersion(const CrystalMedium& medium, const LatticeSpec& spec) {
  medium.validate();
  spec.validate();
  DispersionTable table;
  table.spec = spec;
  table.pump = tabulate(medium, spec, medium.pump_omega(), Polarization::extraordinary_at_cut);
  table.signal = tabulate(medium, spec, medium.signal_omega(), Polarization::ordinary);
  table.delta_k0 = collinear_mismatch(medium);
  table.walkoff = effective_walkoff(medium);
  table.v_ref =
      constants::c / group_index(medium, medium.pump_omega(), Polarization::extraordinary_at_cut);
  return table;
}

}  // namespace twinbeam
