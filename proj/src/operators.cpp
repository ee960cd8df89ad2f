#include "driftlab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "driftlab/errors.hpp"
#include "driftlab/fft.hpp"
#include "driftlab/format.hpp"
#include "driftlab/krylov.hpp"

namespace driftlab {
namespace {

/// Visits every frequency in flat FFT order with the wavevector xi.
template <class F>
void for_each_frequency(const Grid& grid, F&& f) {
  const int d = grid.dimension();
  const int N = grid.points_per_axis();
  std::vector<double> k1(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) k1[i] = grid.wavenumber(i);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> xi(static_cast<std::size_t>(d), k1[0]);
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    f(flat, std::span<const double>(xi), std::span<const int>(idx));
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < N) {
        xi[a] = k1[idx[a]];
        break;
      }
      idx[a] = 0;
      xi[a] = k1[0];
    }
  }
}

double xi2(std::span<const double> xi) {
  double s = 0.0;
  for (double v : xi) s += v * v;
  return s;
}

void require_same_grid(const GridFunction& a, const GridFunction& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("operators: grid mismatch");
}

void require_vector(const GridFunction& b, const char* what) {
  if (b.components() != b.grid().dimension()) throw std::invalid_argument(std::string(what) + ": vector field expected");
}

std::uint64_t splitmix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Scalar function with entries real(u)^a taken from a nonnegative scalar.
GridFunction real_power(const GridFunction& m, double a) {
  GridFunction out(m.grid(), 1);
  for (std::size_t i = 0; i < m.grid().size(); ++i) {
    const double v = m[i].real();
    out[i] = v > 0.0 ? std::pow(v, a) : 0.0;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Multipliers
// ---------------------------------------------------------------------------

GridFunction multiplier_apply(const GridFunction& u, double s, cplx zeta) {
  if (s == 0.0) return u;
  const Grid& g = u.grid();
  const bool real_zeta = zeta.imag() == 0.0;
  std::vector<cplx> symbol(g.size());
  for_each_frequency(g, [&](std::size_t flat, std::span<const double> xi, std::span<const int>) {
    const double k2 = xi2(xi);
    if (real_zeta) {
      const double base = zeta.real() + k2;
      if (!(base > 0.0)) throw std::invalid_argument("multiplier_apply: zeta + |xi|^2 must be positive");
      symbol[flat] = std::pow(base, -s);
    } else {
      symbol[flat] = std::pow(zeta + k2, -s);
    }
  });
  GridFunction out = u;
  for (int c = 0; c < u.components(); ++c) {
    auto comp = out.component(c);
    fft::forward(comp, g.dimension(), g.points_per_axis());
    for (std::size_t i = 0; i < g.size(); ++i) comp[i] *= symbol[i];
    fft::inverse(comp, g.dimension(), g.points_per_axis());
  }
  return out;
}

GridFunction bessel_apply(const GridFunction& u, double s, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("bessel_apply: lambda must be positive");
  return multiplier_apply(u, s, cplx(lambda, 0.0));
}

GridFunction spectral_gradient(const GridFunction& u) {
  if (!u.is_scalar()) throw std::invalid_argument("spectral_gradient: scalar function expected");
  const Grid& g = u.grid();
  const int d = g.dimension();
  const int nyquist = g.points_per_axis() / 2;
  std::vector<cplx> hat(u.values().begin(), u.values().end());
  fft::forward(hat, d, g.points_per_axis());
  GridFunction out(g, d);
  for (int a = 0; a < d; ++a) {
    auto comp = out.component(a);
    for_each_frequency(g, [&](std::size_t flat, std::span<const double> xi, std::span<const int> idx) {
      comp[flat] = idx[a] == nyquist ? cplx{} : cplx(0.0, xi[a]) * hat[flat];
    });
    fft::inverse(comp, d, g.points_per_axis());
  }
  return out;
}

GridFunction spectral_divergence(const GridFunction& v) {
  require_vector(v, "spectral_divergence");
  const Grid& g = v.grid();
  const int d = g.dimension();
  const int nyquist = g.points_per_axis() / 2;
  std::vector<cplx> acc(g.size());
  std::vector<cplx> hat(g.size());
  for (int a = 0; a < d; ++a) {
    auto comp = v.component(a);
    std::copy(comp.begin(), comp.end(), hat.begin());
    fft::forward(hat, d, g.points_per_axis());
    for_each_frequency(g, [&](std::size_t flat, std::span<const double> xi, std::span<const int> idx) {
      if (idx[a] != nyquist) acc[flat] += cplx(0.0, xi[a]) * hat[flat];
    });
  }
  fft::inverse(acc, d, g.points_per_axis());
  return GridFunction(g, 1, std::move(acc));
}

GridFunction spectral_laplacian(const GridFunction& u) {
  const Grid& g = u.grid();
  std::vector<double> symbol(g.size());
  for_each_frequency(g, [&](std::size_t flat, std::span<const double> xi, std::span<const int>) {
    symbol[flat] = -xi2(xi);
  });
  GridFunction out = u;
  for (int c = 0; c < u.components(); ++c) {
    auto comp = out.component(c);
    fft::forward(comp, g.dimension(), g.points_per_axis());
    for (std::size_t i = 0; i < g.size(); ++i) comp[i] *= symbol[i];
    fft::inverse(comp, g.dimension(), g.points_per_axis());
  }
  return out;
}

GridFunction pointwise(const GridFunction& w, const GridFunction& u) {
  require_same_grid(w, u);
  if (!w.is_scalar()) throw std::invalid_argument("pointwise: scalar weight expected");
  GridFunction out = u;
  for (int c = 0; c < u.components(); ++c) {
    auto comp = out.component(c);
    for (std::size_t i = 0; i < comp.size(); ++i) comp[i] *= w[i];
  }
  return out;
}

GridFunction dot_field(const GridFunction& b, const GridFunction& g) {
  require_same_grid(b, g);
  require_vector(b, "dot_field");
  require_vector(g, "dot_field");
  GridFunction out(b.grid(), 1);
  for (int c = 0; c < b.components(); ++c) {
    auto bc = b.component(c);
    auto gc = g.component(c);
    for (std::size_t i = 0; i < bc.size(); ++i) out[i] += bc[i] * gc[i];
  }
  return out;
}

GridFunction magnitude_power(const GridFunction& b, double a) { return real_power(magnitude(b), a); }

GridFunction signed_power(const GridFunction& b, double p) {
  require_vector(b, "signed_power");
  const GridFunction m = magnitude(b);
  GridFunction scale(b.grid(), 1);
  for (std::size_t i = 0; i < b.grid().size(); ++i) {
    const double v = m[i].real();
    scale[i] = v > 0.0 ? std::pow(v, 1.0 / p - 1.0) : 0.0;
  }
  return pointwise(scale, b);
}

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

NormEstimate power_iteration(const GridOperator& gram, const Grid& grid, int max_iterations, double tolerance,
                             std::uint64_t seed) {
  GridFunction v(grid, 1);
  std::uint64_t state = seed;
  for (auto& x : v.values()) {
    x = 0.5 + static_cast<double>(splitmix(state) >> 11) * 0x1.0p-53;
  }
  v *= 1.0 / norm_l2(v);

  NormEstimate est;
  double previous = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    GridFunction w = gram(v);
    const double rq = inner(v, w).real();
    const double wn = norm_l2(w);
    est.value = rq;
    est.iterations = it;
    if (wn == 0.0) {
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if (it > 1 && std::abs(rq - previous) <= tolerance * std::abs(rq)) {
      est.converged = true;
      return est;
    }
    previous = rq;
    v = (1.0 / wn) * std::move(w);
  }
  return est;
}

NormEstimate weak_formbound_estimate(const GridFunction& b, double lambda, int iters, double tolerance) {
  require_vector(b, "weak_formbound_estimate");
  const GridFunction m = magnitude(b);
  return power_iteration(
      [&](const GridFunction& v) { return bessel_apply(pointwise(m, bessel_apply(v, 0.25, lambda)), 0.25, lambda); },
      b.grid(), iters, tolerance);
}

NormEstimate formbound_estimate(const GridFunction& b, double lambda, int iters, double tolerance) {
  require_vector(b, "formbound_estimate");
  const GridFunction m = magnitude(b);
  GridFunction m2(b.grid(), 1);
  for (std::size_t i = 0; i < b.grid().size(); ++i) m2[i] = m[i] * m[i];
  return power_iteration(
      [&](const GridFunction& v) { return bessel_apply(pointwise(m2, bessel_apply(v, 0.5, lambda)), 0.5, lambda); },
      b.grid(), iters, tolerance);
}

DualityCheck duality_check(const GridFunction& b, double mu, int iters, double tolerance) {
  require_vector(b, "duality_check");
  const GridFunction m = magnitude(b);
  const GridFunction root = real_power(m, 0.5);
  DualityCheck out;
  // A = (mu - Delta)^{-1/2} |b|^{1/2}:  A*A = |b|^{1/2} (mu - Delta)^{-1} |b|^{1/2}
  out.left = power_iteration(
      [&](const GridFunction& v) { return pointwise(root, bessel_apply(pointwise(root, v), 1.0, mu)); }, b.grid(),
      iters, tolerance);
  // B = |b|^{1/2} (mu - Delta)^{-1/2}:  B*B = (mu - Delta)^{-1/2} |b| (mu - Delta)^{-1/2}
  out.right = power_iteration(
      [&](const GridFunction& v) { return bessel_apply(pointwise(m, bessel_apply(v, 0.5, mu)), 0.5, mu); }, b.grid(),
      iters, tolerance);
  const double l = std::sqrt(std::max(out.left.value, 0.0));
  const double r = std::sqrt(std::max(out.right.value, 0.0));
  out.relative_gap = std::max(l, r) > 0.0 ? std::abs(l - r) / std::max(l, r) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// T and the factorized resolvent
// ---------------------------------------------------------------------------

OperatorBundle OperatorBundle::at_corner(int d, double lambda, double p, double q, double r) {
  OperatorBundle b;
  b.lambda = lambda;
  b.zeta = cplx(kappa_d(d) * lambda, 0.0);
  b.p = p;
  b.q = q;
  b.r = r;
  return b;
}

void OperatorBundle::validate(int d) const {
  if (!(1.0 <= r && r < p && p < q)) throw std::invalid_argument("OperatorBundle: need 1 <= r < p < q");
  if (!(lambda > 0.0)) throw std::invalid_argument("OperatorBundle: lambda must be positive");
  // Relative slack so the corner itself, computed as kappa_d * lambda, is admitted.
  if (zeta.real() < kappa_d(d) * lambda * (1.0 - 1e-14)) {
    throw std::invalid_argument("OperatorBundle: Re zeta below kappa_d * lambda");
  }
}

double c_p(double p) {
  if (!(p > 1.0)) throw std::invalid_argument("c_p: p must exceed 1");
  return p * (p / (p - 1.0)) / 4.0;
}

GridFunction t_operator_apply(const OperatorBundle& bundle, const GridFunction& b, const GridFunction& h) {
  require_vector(b, "t_operator_apply");
  require_same_grid(b, h);
  const GridFunction B = signed_power(b, bundle.p);
  const GridFunction M = magnitude_power(b, 1.0 - 1.0 / bundle.p);
  return dot_field(B, spectral_gradient(multiplier_apply(pointwise(M, h), 1.0, bundle.zeta)));
}

GridFunction t_adjoint_apply(const OperatorBundle& bundle, const GridFunction& b, const GridFunction& g) {
  require_vector(b, "t_adjoint_apply");
  require_same_grid(b, g);
  const GridFunction B = signed_power(b, bundle.p);
  const GridFunction M = magnitude_power(b, 1.0 - 1.0 / bundle.p);
  GridFunction div = spectral_divergence(pointwise(g, B));
  div *= -1.0;
  return pointwise(M, multiplier_apply(div, 1.0, std::conj(bundle.zeta)));
}

NormEstimate t_norm_estimate(const OperatorBundle& bundle, const GridFunction& b, int iters, double tolerance) {
  if (bundle.p != 2.0) throw std::invalid_argument("t_norm_estimate: 2->2 certification needs p = 2");
  require_vector(b, "t_norm_estimate");
  const GridFunction B = signed_power(b, bundle.p);
  const GridFunction M = magnitude_power(b, 1.0 - 1.0 / bundle.p);
  auto T = [&](const GridFunction& h) {
    return dot_field(B, spectral_gradient(multiplier_apply(pointwise(M, h), 1.0, bundle.zeta)));
  };
  auto Tstar = [&](const GridFunction& g) {
    GridFunction div = spectral_divergence(pointwise(g, B));
    div *= -1.0;
    return pointwise(M, multiplier_apply(div, 1.0, std::conj(bundle.zeta)));
  };
  NormEstimate est = power_iteration([&](const GridFunction& v) { return Tstar(T(v)); }, b.grid(), iters, tolerance);
  est.value = std::sqrt(std::max(est.value, 0.0));
  return est;
}

FactorizedResolvent factorized_resolvent(const GridFunction& b, cplx zeta, const GridFunction& f, double p, double q,
                                         double r, double tail_tolerance) {
  require_vector(b, "factorized_resolvent");
  require_same_grid(b, f);
  if (!f.is_scalar()) throw std::invalid_argument("factorized_resolvent: scalar f expected");
  if (!(1.0 <= r && r < p && p < q)) throw std::invalid_argument("factorized_resolvent: need 1 <= r < p < q");

  OperatorBundle bundle;
  bundle.zeta = zeta;
  bundle.p = p;
  bundle.q = q;
  bundle.r = r;

  FactorizedResolvent out{f, 0, 0.0, 0.0, 0.0};
  // The 2->2 norm of T_p, from the same Gram iteration as t_norm_estimate.
  {
    const GridFunction B = signed_power(b, p);
    const GridFunction M = magnitude_power(b, 1.0 - 1.0 / p);
    auto gram = [&](const GridFunction& v) {
      GridFunction tv = dot_field(B, spectral_gradient(multiplier_apply(pointwise(M, v), 1.0, zeta)));
      GridFunction div = spectral_divergence(pointwise(tv, B));
      div *= -1.0;
      return pointwise(M, multiplier_apply(div, 1.0, std::conj(zeta)));
    };
    out.t_norm = std::sqrt(std::max(power_iteration(gram, b.grid(), 2000, 1e-8).value, 0.0));
  }
  if (out.t_norm >= 1.0) {
    throw SeriesDivergence("factorized_resolvent: ||T|| = " + format_double(out.t_norm) + " >= 1");
  }

  const double inv_r_prime = 1.0 - 1.0 / r;
  const double inv_q_prime = 1.0 - 1.0 / q;
  const GridFunction B = signed_power(b, p);
  const GridFunction M = magnitude_power(b, 1.0 - 1.0 / p);

  // G (zeta - Delta)^{-1/(2r')} f
  const GridFunction smoothed = multiplier_apply(f, 0.5 * inv_r_prime, zeta);
  GridFunction term = dot_field(B, spectral_gradient(multiplier_apply(smoothed, 0.5 + 0.5 / r, zeta)));

  // (1 + T)^{-1} by its Neumann series
  GridFunction sum = term;
  const double first = norm_l2(term);
  double last = first;
  constexpr int kMaxTerms = 5000;
  int k = 0;
  while (last > tail_tolerance * norm_l2(sum)) {
    if (++k > kMaxTerms) throw SeriesDivergence("factorized_resolvent: Neumann series did not reach its tail tolerance");
    term = t_operator_apply(bundle, b, term);
    term *= -1.0;
    const double tn = norm_l2(term);
    if (k > 50 && tn > last) throw SeriesDivergence("factorized_resolvent: Neumann terms stopped contracting");
    last = tn;
    sum += term;
  }
  out.neumann_terms = k;
  out.tail = norm_l2(sum) > 0.0 ? last / norm_l2(sum) : 0.0;
  out.contraction_ratio = (k > 0 && first > 0.0 && last > 0.0) ? std::pow(last / first, 1.0 / k) : 0.0;

  // (zeta - Delta)^{-1/2 - 1/(2q)} Q sum,  Q = (zeta - Delta)^{-1/(2q')} |b|^{1/p'}
  const GridFunction correction =
      multiplier_apply(multiplier_apply(pointwise(M, sum), 0.5 * inv_q_prime, zeta), 0.5 + 0.5 / q, zeta);
  out.u = multiplier_apply(f, 1.0, zeta) - correction;
  return out;
}

GridFunction spectral_resolvent_solve(const GridFunction& b, cplx zeta, const GridFunction& f, double tolerance) {
  require_vector(b, "spectral_resolvent_solve");
  require_same_grid(b, f);
  if (!f.is_scalar()) throw std::invalid_argument("spectral_resolvent_solve: scalar f expected");
  const Grid& g = f.grid();
  // (zeta - Delta + b.grad) R w = w + b.grad R w
  auto apply = [&](std::span<const cplx> w, std::span<cplx> out) {
    GridFunction wf(g, 1, std::vector<cplx>(w.begin(), w.end()));
    const GridFunction adv = dot_field(b, spectral_gradient(multiplier_apply(wf, 1.0, zeta)));
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + adv[i];
  };
  KrylovResult res = gmres(apply, f.values(), tolerance, 80, 4000);
  if (!res.converged) {
    throw SolverFailure("spectral_resolvent_solve: GMRES residual " + format_double(res.relative_residual));
  }
  return multiplier_apply(GridFunction(g, 1, std::move(res.x)), 1.0, zeta);
}

// ---------------------------------------------------------------------------
// Sobolev window
// ---------------------------------------------------------------------------

std::pair<double, double> i_s_endpoints(double delta, int d) {
  if (!(delta >= 0.0)) throw std::invalid_argument("i_s_endpoints: delta must be nonnegative");
  const double md = m_d_constant(d) * delta;
  if (md >= 1.0) throw EmptyInterval("I_s is empty: m_d delta = " + format_double(md) + " >= 1");
  const double s = std::sqrt(1.0 - md);
  const double hi = md == 0.0 ? std::numeric_limits<double>::infinity() : 2.0 / (1.0 - s);
  return {2.0 / (1.0 + s), hi};
}

SobolevInterval i_s_interval(double delta, int d) {
  const auto [lo, hi] = i_s_endpoints(delta, d);
  const double floor = d - 1.0;
  if (hi <= floor * (1.0 + 1e-12)) {
    throw NoSobolevWindow("no p in I_s above d - 1: p_hi = " + format_double(hi));
  }
  return SobolevInterval{lo, hi, std::max(lo, floor), hi};
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

double WeightSpec::rho(std::span<const double> y) const {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  return std::pow(1.0 + l * r2, -nu);
}

void WeightSpec::gradient(std::span<const double> y, std::span<double> out) const {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  const double f = -2.0 * nu * l * std::pow(1.0 + l * r2, -nu - 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = f * y[i];
}

double WeightSpec::laplacian(std::span<const double> y) const {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  const double d = static_cast<double>(y.size());
  const double s = 1.0 + l * r2;
  return -2.0 * nu * l * d * std::pow(s, -nu - 1.0) + 4.0 * nu * (nu + 1.0) * l * l * r2 * std::pow(s, -nu - 2.0);
}

void WeightSpec::validate(int d, double p) const {
  if (!(l > 0.0)) throw std::invalid_argument("WeightSpec: l must be positive");
  if (!(nu > d / (2.0 * p) + 1.0)) throw std::invalid_argument("WeightSpec: need nu > d/(2p) + 1");
}

WeightBoundCheck check_weight_bounds(const WeightSpec& weight, const Grid& grid) {
  const int d = grid.dimension();
  WeightBoundCheck out;
  out.gradient_bound = weight.nu * std::sqrt(weight.l);
  out.laplacian_bound = 2.0 * weight.nu * (2.0 * weight.nu + d + 2.0) * weight.l;
  std::vector<double> y(static_cast<std::size_t>(d)), gr(y);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, y);
    const double rho = weight.rho(y);
    weight.gradient(y, gr);
    double g2 = 0.0;
    for (double v : gr) g2 += v * v;
    out.max_gradient_ratio = std::max(out.max_gradient_ratio, std::sqrt(g2) / rho);
    out.max_laplacian_ratio = std::max(out.max_laplacian_ratio, std::abs(weight.laplacian(y)) / rho);
  }
  out.pass = out.max_gradient_ratio <= out.gradient_bound && out.max_laplacian_ratio <= out.laplacian_bound;
  return out;
}

double weight_identity_residual(const WeightSpec& weight, double mu, const GridFunction& f) {
  if (!f.is_scalar()) throw std::invalid_argument("weight_identity_residual: scalar f expected");
  const Grid& g = f.grid();
  const int d = g.dimension();
  GridFunction rho(g, 1), lap(g, 1), grad(g, d);
  std::vector<double> y(static_cast<std::size_t>(d)), gr(y);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, y);
    rho[i] = weight.rho(y);
    lap[i] = weight.laplacian(y);
    weight.gradient(y, gr);
    for (int a = 0; a < d; ++a) grad.component(a)[i] = gr[a];
  }
  const GridFunction u = bessel_apply(f, 1.0, mu);
  const GridFunction rhs = bessel_apply(pointwise(rho, f), 1.0, mu);
  GridFunction lhs = pointwise(rho, u);
  lhs += bessel_apply(pointwise(lap, u), 1.0, mu);
  lhs += 2.0 * bessel_apply(dot_field(grad, spectral_gradient(u)), 1.0, mu);
  return norm_l2(lhs - rhs) / norm_l2(rhs);
}

namespace {

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

}  // namespace

WeightedEstimateReport weighted_estimate_report(const DriftField& field, const std::vector<int>& n_list, double mu,
                                                double p, const WeightSpec& weight,
                                                const std::vector<GridFunction>& sample_h) {
  if (sample_h.empty()) throw std::invalid_argument("weighted_estimate_report: empty sample set");
  if (n_list.empty()) throw std::invalid_argument("weighted_estimate_report: empty n list");
  const Grid& g = sample_h.front().grid();
  const int d = g.dimension();
  weight.validate(d, p);
  if (mu < kappa_d(d) * (1.0 - 1e-14)) throw std::invalid_argument("weighted_estimate_report: mu below kappa_d");

  GridFunction rho(g, 1);
  std::vector<double> y(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, y);
    rho[i] = weight.rho(y);
  }

  WeightedEstimateReport report;
  report.l_used = weight.l;
  std::vector<double> ns, k1s, k2s;
  for (int n : n_list) {
    const GridFunction b = sample_drift(MollifiedDrift(field, n), g);
    const GridFunction m = magnitude(b);
    const GridFunction m_root = real_power(m, 1.0 / p);
    WeightedEstimateRow row;
    row.n = n;
    for (const auto& h : sample_h) {
      const GridFunction u1 = spectral_resolvent_solve(b, mu, h);
      row.k1 = std::max(row.k1, norm_inf(pointwise(rho, u1)) / norm_lp(pointwise(rho, h), p));
      const GridFunction mh = pointwise(m, h);
      const double den = norm_lp(pointwise(m_root, pointwise(rho, h)), p);
      if (den > 0.0) {
        const GridFunction u2 = spectral_resolvent_solve(b, mu, mh);
        row.k2 = std::max(row.k2, norm_inf(pointwise(rho, u2)) / den);
      }
    }
    report.rows.push_back(row);
    ns.push_back(n);
    k1s.push_back(row.k1);
    k2s.push_back(row.k2 > 0.0 ? row.k2 : 1.0);
    report.k1_fit = std::max(report.k1_fit, row.k1);
    report.k2_fit = std::max(report.k2_fit, row.k2);
  }
  report.k1_trend = loglog_slope(ns, k1s);
  report.k2_trend = loglog_slope(ns, k2s);
  report.pass = report.k1_trend <= kMaxTrend && report.k2_trend <= kMaxTrend;
  return report;
}

std::string to_csv_row(const OperatorRow& row) {
  std::ostringstream s;
  s << row.op << ',' << format_double(row.L) << ',' << row.N << ',' << format_double(row.lambda_or_zeta) << ','
    << format_double(row.estimate) << ',' << format_double(row.bound) << ',' << (row.pass ? "true" : "false");
  return s.str();
}

}  // namespace driftlab
