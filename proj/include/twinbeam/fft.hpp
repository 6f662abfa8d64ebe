#pragma once

#include <complex>
#include <cstddef>

namespace twinbeam::fft {

enum class Direction { forward, backward };

/// Unnormalized in-place multidimensional DFT over a row-major
/// (n0, n1, n2) block. Forward uses the exp(-i...) kernel.
void transform_inplace(std::complex<double>* data, std::size_t n0, std::size_t n1,
                       std::size_t n2, Direction direction);

}  // namespace twinbeam::fft
