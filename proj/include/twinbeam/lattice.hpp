#pragma once

// Discrete transverse-space x time grids and complex envelopes living on them.
//
// Storage order is t fastest, then x, then y; the same order is used by the
// "TBL1" binary dump. Amplitudes are normalized so that |value|^2 counts
// photons per grid cell, and the real <-> spectral transform is unitary, so
// photon bookkeeping does not depend on the domain a lattice is in.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "twinbeam/aligned.hpp"

namespace twinbeam {

using cplx = std::complex<double>;

struct LatticeSpec {
  std::size_t nx = 1;
  std::size_t ny = 1;  // ny == 1 selects the reduced 2D+1 (x, t) geometry
  std::size_t nt = 1;
  double dx = 1.0;  // m
  double dy = 1.0;  // m
  double dt = 1.0;  // s

  std::size_t cells() const noexcept { return nx * ny * nt; }

  /// Throws ContractError for non-power-of-two sizes or non-positive spacings.
  void validate() const;

  double dqx() const noexcept;
  double dqy() const noexcept;
  double domega() const noexcept;

  bool operator==(const LatticeSpec&) const = default;
};

bool is_power_of_two(std::size_t n) noexcept;

/// Angular-frequency axis of an n-point transform with sample spacing d, in
/// wrap-around order (zero frequency at index 0, negative half at the top).
std::vector<double> spectral_axis(std::size_t n, double spacing);

/// Real-space coordinates centred on index n/2.
std::vector<double> real_axis(std::size_t n, double spacing);

enum class Domain { real, spectral };

class ComplexLattice {
 public:
  ComplexLattice() = default;
  explicit ComplexLattice(const LatticeSpec& spec, Domain domain = Domain::real);

  const LatticeSpec& spec() const noexcept { return spec_; }
  Domain domain() const noexcept { return domain_; }
  void set_domain(Domain d) noexcept { domain_ = d; }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<cplx> values() noexcept { return values_; }
  std::span<const cplx> values() const noexcept { return values_; }
  cplx* data() noexcept { return values_.data(); }
  const cplx* data() const noexcept { return values_.data(); }

  std::size_t index(std::size_t ix, std::size_t iy, std::size_t it) const noexcept {
    return (iy * spec_.nx + ix) * spec_.nt + it;
  }
  cplx& at(std::size_t ix, std::size_t iy, std::size_t it) noexcept {
    return values_[index(ix, iy, it)];
  }
  const cplx& at(std::size_t ix, std::size_t iy, std::size_t it) const noexcept {
    return values_[index(ix, iy, it)];
  }

  std::vector<double> qx_axis() const { return spectral_axis(spec_.nx, spec_.dx); }
  std::vector<double> qy_axis() const { return spectral_axis(spec_.ny, spec_.dy); }
  std::vector<double> omega_axis() const { return spectral_axis(spec_.nt, spec_.dt); }

 private:
  LatticeSpec spec_{};
  Domain domain_ = Domain::real;
  AlignedVector<cplx> values_;
};

/// All-zero lattice in the real domain.
ComplexLattice make_lattice(const LatticeSpec& spec);

ComplexLattice to_spectral(const ComplexLattice& f);
ComplexLattice from_spectral(const ComplexLattice& f);

/// In-place unitary transforms; used by the propagator's inner loop.
void transform_to_spectral(ComplexLattice& f);
void transform_from_spectral(ComplexLattice& f);

/// Sum of |value|^2; with subtract_vacuum the half photon per cell of the
/// symmetric (Wigner) ordering is removed. Can be negative for vacuum noise.
double photon_number(const ComplexLattice& f, bool subtract_vacuum = false);

// "TBL1" dump: magic, u32 nx, ny, nt, f64 dx, dy, dt, then (re, im) f32
// pairs, all little-endian.
void write_lattice(std::ostream& out, const ComplexLattice& f);
void write_lattice(const std::filesystem::path& path, const ComplexLattice& f);
ComplexLattice read_lattice(std::istream& in);
ComplexLattice read_lattice(const std::filesystem::path& path);

/// Writes the TBL1 layout for an arbitrary (possibly non-power-of-two) real map.
void write_real_map(const std::filesystem::path& path, std::size_t nx, std::size_t ny,
                    double dx, double dy, std::span<const double> row_major_values);

}  // namespace twinbeam
