#include "driftlab/krylov.hpp"

#include <cmath>

namespace driftlab {
namespace {

using cplx = std::complex<double>;

double norm2(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

cplx dot(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace

KrylovResult gmres(const LinearMap& apply, std::span<const cplx> rhs, double tol, int restart,
                   int max_iterations) {
  const std::size_t n = rhs.size();
  KrylovResult res;
  res.x.assign(n, cplx{});
  const double bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<cplx> r(rhs.begin(), rhs.end());
  std::vector<cplx> w(n);
  const auto m = static_cast<std::size_t>(restart);
  std::vector<std::vector<cplx>> V;
  std::vector<std::vector<cplx>> H(m + 1, std::vector<cplx>(m, cplx{}));
  std::vector<double> cs(m);
  std::vector<cplx> sn(m), g(m + 1);

  double rel = 1.0;
  while (res.iterations < max_iterations) {
    // r = b - A x
    apply(res.x, w);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - w[i];
    const double beta = norm2(r);
    rel = beta / bnorm;
    if (rel <= tol) break;

    V.assign(1, std::vector<cplx>(n));
    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), cplx{});
    g[0] = beta;

    std::size_t k = 0;
    for (; k < m && res.iterations < max_iterations; ++k) {
      ++res.iterations;
      apply(V[k], w);
      for (std::size_t j = 0; j <= k; ++j) {
        H[j][k] = dot(V[j], w);
        for (std::size_t i = 0; i < n; ++i) w[i] -= H[j][k] * V[j][i];
      }
      const double hn = norm2(w);
      H[k + 1][k] = hn;
      for (std::size_t j = 0; j < k; ++j) {
        const cplx t = cs[j] * H[j][k] + sn[j] * H[j + 1][k];
        H[j + 1][k] = -std::conj(sn[j]) * H[j][k] + cs[j] * H[j + 1][k];
        H[j][k] = t;
      }
      const double a = std::abs(H[k][k]);
      const double den = std::hypot(a, hn);
      if (den == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else if (a == 0.0) {
        cs[k] = 0.0;
        sn[k] = 1.0;
      } else {
        cs[k] = a / den;
        sn[k] = (H[k][k] / a) * hn / den;
      }
      H[k][k] = cs[k] * H[k][k] + sn[k] * hn;
      H[k + 1][k] = 0.0;
      g[k + 1] = -std::conj(sn[k]) * g[k];
      g[k] = cs[k] * g[k];
      rel = std::abs(g[k + 1]) / bnorm;
      if (rel <= tol || hn == 0.0) {
        ++k;
        break;
      }
      V.emplace_back(n);
      for (std::size_t i = 0; i < n; ++i) V[k + 1][i] = w[i] / hn;
    }

    // Back substitution for the k x k upper-triangular system.
    std::vector<cplx> y(k);
    for (std::size_t jj = k; jj-- > 0;) {
      cplx s = g[jj];
      for (std::size_t l = jj + 1; l < k; ++l) s -= H[jj][l] * y[l];
      y[jj] = s / H[jj][jj];
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) res.x[i] += y[j] * V[j][i];
    }
    if (rel <= tol) break;
  }

  apply(res.x, w);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - w[i];
  res.relative_residual = norm2(r) / bnorm;
  res.converged = res.relative_residual <= 10.0 * tol;
  return res;
}

}  // namespace driftlab
