#pragma once

#include <complex>
#include <span>

namespace driftlab::fft {

using cplx = std::complex<double>;

/// In-place d-dimensional DFT over an n^d row-major array (last axis fastest).
/// Unnormalized forward transform, exp(-i k x) convention.
void forward(std::span<cplx> data, int d, int n);

/// Inverse of forward, including the 1/n^d factor.
void inverse(std::span<cplx> data, int d, int n);

}  // namespace driftlab::fft
