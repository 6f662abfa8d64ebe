#include "twinbeam/lattice.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/fft.hpp"

namespace twinbeam {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void LatticeSpec::validate() const {
  if (!is_power_of_two(nx) || !is_power_of_two(ny) || !is_power_of_two(nt)) {
    throw ContractError("size not power of two (nx=" + std::to_string(nx) +
                        ", ny=" + std::to_string(ny) + ", nt=" + std::to_string(nt) + ")");
  }
  if (!(dx > 0.0) || !(dy > 0.0) || !(dt > 0.0)) {
    throw ContractError("lattice spacings must be positive");
  }
}

double LatticeSpec::dqx() const noexcept {
  return 2.0 * std::numbers::pi / (static_cast<double>(nx) * dx);
}
double LatticeSpec::dqy() const noexcept {
  return 2.0 * std::numbers::pi / (static_cast<double>(ny) * dy);
}
double LatticeSpec::domega() const noexcept {
  return 2.0 * std::numbers::pi / (static_cast<double>(nt) * dt);
}

std::vector<double> spectral_axis(std::size_t n, double spacing) {
  std::vector<double> axis(n);
  const double step = 2.0 * std::numbers::pi / (static_cast<double>(n) * spacing);
  const auto half = static_cast<std::ptrdiff_t>(n / 2);
  for (std::size_t k = 0; k < n; ++k) {
    auto signed_k = static_cast<std::ptrdiff_t>(k);
    if (n > 1 && signed_k >= half) signed_k -= static_cast<std::ptrdiff_t>(n);
    axis[k] = step * static_cast<double>(signed_k);
  }
  return axis;
}

std::vector<double> real_axis(std::size_t n, double spacing) {
  std::vector<double> axis(n);
  const auto half = static_cast<double>(n / 2);
  for (std::size_t k = 0; k < n; ++k) axis[k] = (static_cast<double>(k) - half) * spacing;
  return axis;
}

ComplexLattice::ComplexLattice(const LatticeSpec& spec, Domain domain)
    : spec_(spec), domain_(domain) {
  spec_.validate();
  values_.assign(spec_.cells(), cplx{0.0, 0.0});
}

ComplexLattice make_lattice(const LatticeSpec& spec) { return ComplexLattice(spec); }

namespace {

void unitary_transform(ComplexLattice& f, fft::Direction direction) {
  const auto& s = f.spec();
  fft::transform_inplace(f.data(), s.ny, s.nx, s.nt, direction);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.cells()));
  for (auto& v : f.values()) v *= scale;
}

}  // namespace

void transform_to_spectral(ComplexLattice& f) {
  if (f.domain() != Domain::real) throw ContractError("to_spectral: lattice is not in real domain");
  unitary_transform(f, fft::Direction::forward);
  f.set_domain(Domain::spectral);
}

void transform_from_spectral(ComplexLattice& f) {
  if (f.domain() != Domain::spectral) {
    throw ContractError("from_spectral: lattice is not in spectral domain");
  }
  unitary_transform(f, fft::Direction::backward);
  f.set_domain(Domain::real);
}

ComplexLattice to_spectral(const ComplexLattice& f) {
  ComplexLattice out = f;
  transform_to_spectral(out);
  return out;
}

ComplexLattice from_spectral(const ComplexLattice& f) {
  ComplexLattice out = f;
  transform_from_spectral(out);
  return out;
}

double photon_number(const ComplexLattice& f, bool subtract_vacuum) {
  double total = 0.0;
  for (const auto& v : f.values()) total += std::norm(v);
  if (subtract_vacuum) total -= 0.5 * static_cast<double>(f.size());
  return total;
}

namespace {

void write_header(std::ostream& out, std::size_t nx, std::size_t ny, std::size_t nt, double dx,
                  double dy, double dt) {
  out.write("TBL1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(nx));
  detail::put_u32(out, static_cast<std::uint32_t>(ny));
  detail::put_u32(out, static_cast<std::uint32_t>(nt));
  detail::put_f64(out, dx);
  detail::put_f64(out, dy);
  detail::put_f64(out, dt);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_lattice(std::ostream& out, const ComplexLattice& f) {
  const auto& s = f.spec();
  write_header(out, s.nx, s.ny, s.nt, s.dx, s.dy, s.dt);
  for (const auto& v : f.values()) {
    detail::put_f32(out, static_cast<float>(v.real()));
    detail::put_f32(out, static_cast<float>(v.imag()));
  }
  if (!out) throw IoError("failed writing lattice");
}

void write_lattice(const std::filesystem::path& path, const ComplexLattice& f) {
  auto out = open_for_write(path);
  write_lattice(out, f);
}

void write_real_map(const std::filesystem::path& path, std::size_t nx, std::size_t ny, double dx,
                    double dy, std::span<const double> row_major_values) {
  if (row_major_values.size() != nx * ny) throw ContractError("write_real_map: size mismatch");
  auto out = open_for_write(path);
  write_header(out, nx, ny, 1, dx, dy, 1.0);
  for (double v : row_major_values) {
    detail::put_f32(out, static_cast<float>(v));
    detail::put_f32(out, 0.0f);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ComplexLattice read_lattice(std::istream& in) {
  detail::Reader reader(in);
  reader.expect_magic("TBL1");
  LatticeSpec spec;
  spec.nx = reader.u32("nx");
  spec.ny = reader.u32("ny");
  spec.nt = reader.u32("nt");
  spec.dx = reader.f64("dx");
  spec.dy = reader.f64("dy");
  spec.dt = reader.f64("dt");
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid lattice header: ") + e.what(), 4);
  }
  ComplexLattice f(spec);
  for (auto& v : f.values()) {
    const float re = reader.f32("lattice values");
    const float im = reader.f32("lattice values");
    v = cplx(re, im);
  }
  return f;
}

ComplexLattice read_lattice(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_lattice(in);
}

}  // namespace twinbeam
