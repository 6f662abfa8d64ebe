#include "twinbeam/propagator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "twinbeam/errors.hpp"

namespace twinbeam {

std::size_t RunConfig::steps(double length_m) const {
  if (!(dz_m > 0.0)) throw ContractError("dz must be positive");
  const double ratio = length_m / dz_m;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio) || rounded < 4.0) {
    throw ContractError("crystal length / dz must be an integer >= 4");
  }
  return static_cast<std::size_t>(rounded);
}

double nonlinear_coupling(const CrystalMedium& medium, const DispersionTable& table) {
  const double ns = index(medium, medium.signal_center_wavelength_m, Polarization::ordinary);
  const double np =
      index(medium, medium.pump_center_wavelength_m, Polarization::extraordinary_at_cut);
  const double ws = medium.signal_omega();
  const double wp = medium.pump_omega();
  const auto& s = table.spec;
  const double kappa = 2.0 * medium.deff_m_per_v * ws / (ns * constants::c);
  const double cell = s.dx * s.dy * s.dt;
  return kappa * std::sqrt(constants::hbar * wp / (2.0 * np * constants::epsilon0 * constants::c * cell));
}

double pump_peak_amplitude(double peak_power_w, double waist_m, const LatticeSpec& spec,
                           const CrystalMedium& medium) {
  if (peak_power_w < 0.0) throw ContractError("peak power must be non-negative");
  if (!(waist_m > 0.0)) throw ContractError("waist must be positive");
  const double intensity = 2.0 * peak_power_w / (std::numbers::pi * waist_m * waist_m);
  const double photons = intensity * spec.dx * spec.dy * spec.dt /
                         (constants::hbar * medium.pump_omega());
  return std::sqrt(photons);
}

ComplexLattice seed_vacuum(const LatticeSpec& spec, std::uint64_t rng_seed) {
  ComplexLattice f(spec);
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> quadrature(0.0, 0.5);
  for (auto& v : f.values()) {
    const double re = quadrature(rng);
    const double im = quadrature(rng);
    v = cplx(re, im);
  }
  return f;
}

namespace {

void check_resolved(double fwhm, double spacing, const char* what) {
  if (fwhm / spacing < 8.0) {
    std::ostringstream msg;
    msg << "under-resolved pulse: " << what << " FWHM spans " << fwhm / spacing
        << " samples (< 8)";
    throw ContractError(msg.str());
  }
}

}  // namespace

ComplexLattice make_pump(const LatticeSpec& spec, const CrystalMedium& medium,
                         const PumpPulse& pulse) {
  (void)medium;
  if (!(pulse.waist_m > 0.0) || !(pulse.duration_s > 0.0)) {
    throw ContractError("pump waist and duration must be positive");
  }
  const double spatial_fwhm = pulse.waist_m * std::sqrt(2.0 * std::log(2.0));
  check_resolved(spatial_fwhm, spec.dx, "spatial");
  if (spec.ny > 1) check_resolved(spatial_fwhm, spec.dy, "spatial (y)");
  check_resolved(pulse.duration_s, spec.dt, "temporal");

  ComplexLattice b(spec);
  if (pulse.peak_amplitude == 0.0) return b;

  const auto x = real_axis(spec.nx, spec.dx);
  const auto y = real_axis(spec.ny, spec.dy);
  const auto t = real_axis(spec.nt, spec.dt);
  const double w2 = pulse.waist_m * pulse.waist_m;
  // |b|^2 ~ exp(-4 ln2 t^2 / tau^2) so the amplitude carries half the exponent.
  const double at = 2.0 * std::log(2.0) / (pulse.duration_s * pulse.duration_s);
  std::vector<cplx> temporal(spec.nt);
  for (std::size_t it = 0; it < spec.nt; ++it) {
    temporal[it] = std::exp(cplx(-at * t[it] * t[it], pulse.chirp_per_s2 * t[it] * t[it]));
  }
  for (std::size_t iy = 0; iy < spec.ny; ++iy) {
    for (std::size_t ix = 0; ix < spec.nx; ++ix) {
      const double transverse =
          pulse.peak_amplitude * std::exp(-(x[ix] * x[ix] + y[iy] * y[iy]) / w2);
      for (std::size_t it = 0; it < spec.nt; ++it) b.at(ix, iy, it) = transverse * temporal[it];
    }
  }
  return b;
}

double pump_photon_number_closed_form(const LatticeSpec& spec, const PumpPulse& pulse) {
  // sum over cells of exp(-2 x^2 / w^2) -> w sqrt(pi/2) / dx per transverse axis,
  // exp(-4 ln2 t^2 / tau^2) -> tau sqrt(pi / (4 ln 2)) / dt.
  const double per_axis = pulse.waist_m * std::sqrt(std::numbers::pi / 2.0);
  double total = pulse.peak_amplitude * pulse.peak_amplitude;
  total *= per_axis / spec.dx;
  if (spec.ny > 1) total *= per_axis / spec.dy;
  total *= pulse.duration_s * std::sqrt(std::numbers::pi / (4.0 * std::log(2.0))) / spec.dt;
  return total;
}

SplitStepper::SplitStepper(const CrystalMedium& medium, const DispersionTable& table, double dz,
                           const PropagationOptions& options)
    : dz_(dz),
      sigma_(options.coupling.value_or(nonlinear_coupling(medium, table))),
      delta_k0_(table.delta_k0),
      linear_(options.linear) {
  if (!(dz > 0.0)) throw ContractError("dz must be positive");
  const auto& s = table.spec;
  half_a_.assign(s.cells(), cplx(1.0, 0.0));
  half_b_.assign(s.cells(), cplx(1.0, 0.0));
  if (!linear_) return;

  const double h = 0.5 * dz;
  const auto qx = spectral_axis(s.nx, s.dx);
  const auto omega = spectral_axis(s.nt, s.dt);
  const double inv_v = 1.0 / table.v_ref;
  for (std::size_t iy = 0; iy < s.ny; ++iy) {
    for (std::size_t ix = 0; ix < s.nx; ++ix) {
      for (std::size_t it = 0; it < s.nt; ++it) {
        const std::size_t idx = (iy * s.nx + ix) * s.nt + it;
        const double frame = omega[it] * inv_v;
        if (table.signal.evanescent[idx]) {
          half_a_[idx] = std::exp(-table.signal.decay[idx] * h);
        } else {
          half_a_[idx] = std::polar(1.0, (table.signal.kz[idx] - table.signal.k_carrier - frame) * h);
        }
        if (table.pump.evanescent[idx]) {
          half_b_[idx] = std::exp(-table.pump.decay[idx] * h);
        } else {
          const double walk = table.walkoff * qx[ix];
          half_b_[idx] =
              std::polar(1.0, (table.pump.kz[idx] - table.pump.k_carrier - frame - walk) * h);
        }
      }
    }
  }
}

void SplitStepper::linear_half(ComplexLattice& a, ComplexLattice& b) const {
  if (!linear_) return;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) {
    av[k] *= half_a_[k];
    bv[k] *= half_b_[k];
  }
}

// Implicit midpoint rule per cell: second order, symmetric, and exact for the
// quadratic invariant |a|^2 + 2|b|^2 once the fixed point is converged.
void SplitStepper::nonlinear(ComplexLattice& a, ComplexLattice& b, double z_start) const {
  if (sigma_ == 0.0) return;
  const double h = dz_;
  const cplx phase = std::polar(1.0, delta_k0_ * (z_start + 0.5 * h));
  const cplx ka = h * sigma_ * phase;
  const cplx kb = -0.5 * h * sigma_ * std::conj(phase);
  auto av = a.values();
  auto bv = b.values();
  double max_mag = 0.0;
  bool finite = true;
  for (std::size_t k = 0; k < av.size(); ++k) {
    const cplx a0 = av[k];
    const cplx b0 = bv[k];
    // explicit midpoint predictor
    cplx am = a0 + 0.5 * ka * b0 * std::conj(a0);
    cplx bm = b0 + 0.5 * kb * a0 * a0;
    cplx a1 = a0 + ka * bm * std::conj(am);
    cplx b1 = b0 + kb * am * am;
    for (int iter = 0; iter < 60; ++iter) {
      am = 0.5 * (a0 + a1);
      bm = 0.5 * (b0 + b1);
      const cplx a2 = a0 + ka * bm * std::conj(am);
      const cplx b2 = b0 + kb * am * am;
      const double change = std::abs(a2 - a1) + std::abs(b2 - b1);
      a1 = a2;
      b1 = b2;
      if (change <= 1e-15 * (std::abs(a1) + std::abs(b1)) || !(change == change)) break;
    }
    av[k] = a1;
    bv[k] = b1;
    const double mag = std::max(std::abs(a1), std::abs(b1));
    if (!std::isfinite(mag)) finite = false;
    max_mag = std::max(max_mag, mag);
  }
  if (!finite) {
    std::ostringstream msg;
    msg << "non-finite field values at z = " << z_start + h << " m";
    throw NumericAbort(msg.str(), z_start + h, max_mag);
  }
}

PdcState SplitStepper::step(const PdcState& state) const {
  if (state.a.domain() != Domain::real || state.b.domain() != Domain::real) {
    throw ContractError("step: state lattices must be in the real domain");
  }
  if (!(state.a.spec() == state.b.spec())) throw ContractError("step: a and b specs differ");
  PdcState out = state;
  transform_to_spectral(out.a);
  transform_to_spectral(out.b);
  linear_half(out.a, out.b);
  transform_from_spectral(out.a);
  transform_from_spectral(out.b);
  nonlinear(out.a, out.b, state.z);
  transform_to_spectral(out.a);
  transform_to_spectral(out.b);
  linear_half(out.a, out.b);
  transform_from_spectral(out.a);
  transform_from_spectral(out.b);
  out.z = state.z + dz_;
  return out;
}

namespace {

// Inverse unitary DFT evaluated only at the grid centre (index n/2 per axis),
// where the kernel reduces to (-1)^(kx + ky + kt).
cplx centre_value(const ComplexLattice& spectral) {
  const auto& s = spectral.spec();
  cplx sum{};
  for (std::size_t iy = 0; iy < s.ny; ++iy) {
    for (std::size_t ix = 0; ix < s.nx; ++ix) {
      for (std::size_t it = 0; it < s.nt; ++it) {
        std::size_t parity = 0;
        if (s.ny > 1) parity += iy;
        if (s.nx > 1) parity += ix;
        if (s.nt > 1) parity += it;
        const cplx v = spectral.at(ix, iy, it);
        sum += (parity & 1U) ? -v : v;
      }
    }
  }
  return sum / std::sqrt(static_cast<double>(s.cells()));
}

MonitorSample sample(const PdcState& st) {
  MonitorSample m;
  m.z = st.z;
  m.n_a = photon_number(st.a);
  m.n_b = photon_number(st.b);
  m.q = m.n_a + 2.0 * m.n_b;
  m.pump_on_axis = st.b.domain() == Domain::spectral ? centre_value(st.b) : [&] {
    const auto& s = st.b.spec();
    return st.b.at(s.nx / 2, s.ny / 2, s.nt / 2);
  }();
  return m;
}

}  // namespace

void SplitStepper::run(PdcState& state, std::size_t count,
                       std::vector<MonitorSample>* monitors) const {
  if (state.a.domain() != Domain::real || state.b.domain() != Domain::real) {
    throw ContractError("propagate: state lattices must be in the real domain");
  }
  if (!(state.a.spec() == state.b.spec())) throw ContractError("propagate: a and b specs differ");
  if (monitors) monitors->push_back(sample(state));
  transform_to_spectral(state.a);
  transform_to_spectral(state.b);
  for (std::size_t n = 0; n < count; ++n) {
    linear_half(state.a, state.b);
    transform_from_spectral(state.a);
    transform_from_spectral(state.b);
    nonlinear(state.a, state.b, state.z);
    transform_to_spectral(state.a);
    transform_to_spectral(state.b);
    linear_half(state.a, state.b);
    state.z += dz_;
    if (monitors) monitors->push_back(sample(state));
  }
  transform_from_spectral(state.a);
  transform_from_spectral(state.b);
}

PdcState step(const PdcState& state, const CrystalMedium& medium, const DispersionTable& table,
              double dz, const PropagationOptions& options) {
  return SplitStepper(medium, table, dz, options).step(state);
}

PdcState propagate(PdcState state, const CrystalMedium& medium, const DispersionTable& table,
                   const RunConfig& config, const PropagationOptions& options,
                   std::vector<MonitorSample>* monitors) {
  const std::size_t count = config.steps(medium.length_m);
  if (state.z < 0.0 || state.z > medium.length_m) throw ContractError("state z outside crystal");
  SplitStepper stepper(medium, table, config.dz_m, options);
  stepper.run(state, count, monitors);
  return state;
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

void for_each_realization(const CrystalMedium& medium, const DispersionTable& table,
                          const RunConfig& config, const PropagationOptions& options,
                          const std::function<void(std::size_t, PdcState&&)>& visit,
                          std::vector<MonitorSample>* first_monitors) {
  if (config.realizations < 1) throw ContractError("realizations must be >= 1");
  const std::size_t count = config.steps(medium.length_m);
  const SplitStepper stepper(medium, table, config.dz_m, options);
  const ComplexLattice pump = make_pump(table.spec, medium, config.pump);
  parallel_for(config.realizations, options.workers, [&](std::size_t i) {
    PdcState state{seed_vacuum(table.spec, config.noise_seed + i), pump, 0.0};
    stepper.run(state, count, i == 0 ? first_monitors : nullptr);
    visit(i, std::move(state));
  });
}

std::vector<PdcState> run_ensemble(const CrystalMedium& medium, const DispersionTable& table,
                                   const RunConfig& config, const PropagationOptions& options) {
  std::vector<PdcState> out(config.realizations);
  for_each_realization(medium, table, config, options,
                       [&](std::size_t i, PdcState&& s) { out[i] = std::move(s); });
  return out;
}

void write_monitor_csv(const std::filesystem::path& path,
                       const std::vector<MonitorSample>& samples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "z,N_a,N_b,Q,pump_on_axis_re,pump_on_axis_im\n";
  out << std::setprecision(17);
  for (const auto& m : samples) {
    out << m.z << ',' << m.n_a << ',' << m.n_b << ',' << m.q << ',' << m.pump_on_axis.real()
        << ',' << m.pump_on_axis.imag() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace twinbeam
