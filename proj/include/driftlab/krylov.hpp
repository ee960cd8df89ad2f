#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace driftlab {

using LinearMap = std::function<void(std::span<const std::complex<double>>, std::span<std::complex<double>>)>;

struct KrylovResult {
  std::vector<std::complex<double>> x;
  int iterations = 0;
  double relative_residual = 0.0;  // true residual |b - A x| / |b|, recomputed at the end
  bool converged = false;
};

/// Restarted GMRES(m) with modified Gram-Schmidt and Givens rotations.
/// Starts from zero; stops when the relative residual drops below tol.
KrylovResult gmres(const LinearMap& apply, std::span<const std::complex<double>> rhs, double tol,
                   int restart = 60, int max_iterations = 2000);

}  // namespace driftlab
