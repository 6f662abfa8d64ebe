#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "twinbeam/lattice.hpp"

namespace testing {

inline twinbeam::ComplexLattice random_lattice(const twinbeam::LatticeSpec& spec, std::uint64_t seed) {
  twinbeam::ComplexLattice f(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : f.values()) v = {n(rng), n(rng)};
  return f;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twinbeam_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing
