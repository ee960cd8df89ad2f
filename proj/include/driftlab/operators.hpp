#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/grid.hpp"

namespace driftlab {

// ---------------------------------------------------------------------------
// Fourier multipliers on the periodic grid
// ---------------------------------------------------------------------------

/// (zeta + |xi|^2)^{-s} applied componentwise; principal branch for complex zeta.
GridFunction multiplier_apply(const GridFunction& u, double s, cplx zeta);

/// (lambda - Delta)^{-s}.
GridFunction bessel_apply(const GridFunction& u, double s, double lambda);

/// Spectral derivatives. The Nyquist mode is dropped from first derivatives
/// so that gradient and -divergence are exact adjoints.
GridFunction spectral_gradient(const GridFunction& u);
GridFunction spectral_divergence(const GridFunction& v);
GridFunction spectral_laplacian(const GridFunction& u);

/// w(x) u(x) for scalar w; u scalar or vector.
GridFunction pointwise(const GridFunction& w, const GridFunction& u);
/// b(x) . g(x) for two vector functions.
GridFunction dot_field(const GridFunction& b, const GridFunction& g);
/// |b|^{a}, with 0^{a} = 0 for a < 0.
GridFunction magnitude_power(const GridFunction& b, double a);
/// b^{1/p} := |b|^{1/p - 1} b, zero where b vanishes.
GridFunction signed_power(const GridFunction& b, double p);

// ---------------------------------------------------------------------------
// Norm estimation
// ---------------------------------------------------------------------------

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;  // false: the cap was hit; value is the last Rayleigh quotient
};

using GridOperator = std::function<GridFunction(const GridFunction&)>;

/// Largest eigenvalue of a self-adjoint nonnegative operator by power
/// iteration from a fixed pseudo-random start. Stops when successive Rayleigh
/// quotients agree to `tolerance` relatively.
NormEstimate power_iteration(const GridOperator& gram, const Grid& grid, int max_iterations, double tolerance,
                             std::uint64_t seed = 1);

/// ||  |b|^{1/2} (lambda - Delta)^{-1/4} ||^2_{2->2}.
NormEstimate weak_formbound_estimate(const GridFunction& b, double lambda, int iters, double tolerance = 1e-6);

/// ||  |b| (lambda - Delta)^{-1/2} ||^2_{2->2}.
NormEstimate formbound_estimate(const GridFunction& b, double lambda, int iters, double tolerance = 1e-6);

/// The two sides of the adjoint pair (mu - Delta)^{-1/2}|b|^{1/2} and
/// |b|^{1/2}(mu - Delta)^{-1/2}, each estimated on its own Gram operator.
struct DualityCheck {
  NormEstimate left;
  NormEstimate right;
  double relative_gap = 0.0;
};

DualityCheck duality_check(const GridFunction& b, double mu, int iters, double tolerance = 1e-12);

// ---------------------------------------------------------------------------
// The factorized resolvent
// ---------------------------------------------------------------------------

struct OperatorBundle {
  cplx zeta{1.5, 0.0};
  double lambda = 1.0;
  double p = 2.0;
  double q = 3.0;
  double r = 1.5;

  /// zeta at the corner kappa_d lambda of the half-plane.
  static OperatorBundle at_corner(int d, double lambda, double p = 2.0, double q = 3.0, double r = 1.5);

  /// Throws std::invalid_argument unless 1 <= r < p < q and Re zeta >= kappa_d lambda.
  void validate(int d) const;
};

/// c_p = p p' / 4.
double c_p(double p);

/// T h = b^{1/p} . grad (zeta - Delta)^{-1} |b|^{1/p'} h.
GridFunction t_operator_apply(const OperatorBundle& bundle, const GridFunction& b, const GridFunction& h);

/// The L^2 adjoint of T at p = 2: -|b|^{1/2} (conj zeta - Delta)^{-1} div(b^{1/2} g).
GridFunction t_adjoint_apply(const OperatorBundle& bundle, const GridFunction& b, const GridFunction& g);

/// ||T||_{2->2}; requires p = 2.
NormEstimate t_norm_estimate(const OperatorBundle& bundle, const GridFunction& b, int iters = 2000,
                             double tolerance = 1e-8);

struct FactorizedResolvent {
  GridFunction u;
  int neumann_terms = 0;
  double contraction_ratio = 0.0;  // geometric mean of successive term ratios
  double tail = 0.0;               // last term norm relative to the partial sum
  double t_norm = 0.0;             // ||T||_{2->2} used for the divergence test
};

/// (zeta - Delta)^{-1} f - (zeta - Delta)^{-1/2 - 1/(2q)} Q (1 + T)^{-1} G (zeta - Delta)^{-1/(2r')} f
/// with Q = (zeta - Delta)^{-1/(2q')}|b|^{1/p'} and G = b^{1/p}.grad (zeta - Delta)^{-1/2 - 1/(2r)}.
/// Throws SeriesDivergence if ||T||_{2->2} >= 1 or the partial sums stop contracting.
FactorizedResolvent factorized_resolvent(const GridFunction& b, cplx zeta, const GridFunction& f, double p,
                                         double q, double r, double tail_tolerance = 1e-10);

/// Solves (zeta - Delta + b.grad) u = f with the spectral Laplacian and
/// gradient by GMRES, right-preconditioned by (zeta - Delta)^{-1}. Throws
/// SolverFailure above the residual target.
GridFunction spectral_resolvent_solve(const GridFunction& b, cplx zeta, const GridFunction& f,
                                      double tolerance = 1e-12);

// ---------------------------------------------------------------------------
// Sobolev window
// ---------------------------------------------------------------------------

struct SobolevInterval {
  double p_lo = 0.0;
  double p_hi = 0.0;
  double window_lo = 0.0;  // max(p_lo, d - 1)
  double window_hi = 0.0;  // p_hi
};

/// (2/(1 + sqrt(1 - m_d delta)), 2/(1 - sqrt(1 - m_d delta))); p_hi is +inf at delta = 0.
/// Throws EmptyInterval if m_d delta >= 1.
std::pair<double, double> i_s_endpoints(double delta, int d);

/// The interval plus its part above d - 1. Throws EmptyInterval as above and
/// NoSobolevWindow when p_hi <= d - 1 (to a relative 1e-12).
SobolevInterval i_s_interval(double delta, int d);

// ---------------------------------------------------------------------------
// Weighted estimates
// ---------------------------------------------------------------------------

/// rho(y) = (1 + l |y|^2)^{-nu}.
struct WeightSpec {
  double l = 1e-2;
  double nu = 2.0;

  double rho(std::span<const double> y) const;
  void gradient(std::span<const double> y, std::span<double> out) const;
  double laplacian(std::span<const double> y) const;

  /// Throws std::invalid_argument unless l > 0 and nu > d/(2p) + 1.
  void validate(int d, double p) const;
};

struct WeightBoundCheck {
  double max_gradient_ratio = 0.0;   // max |grad rho| / rho
  double gradient_bound = 0.0;       // nu sqrt(l)
  double max_laplacian_ratio = 0.0;  // max |Delta rho| / rho
  double laplacian_bound = 0.0;      // 2 nu (2 nu + d + 2) l
  bool pass = false;
};

WeightBoundCheck check_weight_bounds(const WeightSpec& weight, const Grid& grid);

/// Relative residual of
///   rho u + R((Delta rho) u) + 2 R(grad rho . grad u) - R(rho f),  u = R f,  R = (mu - Delta)^{-1},
/// measured in L^2 against ||R(rho f)||.
double weight_identity_residual(const WeightSpec& weight, double mu, const GridFunction& f);

struct WeightedEstimateRow {
  int n = 0;
  double k1 = 0.0;  // max over h of ||rho (mu + Lambda(b_n))^{-1} h||_inf / ||rho h||_p
  double k2 = 0.0;  // max over h of ||rho (mu + Lambda(b_n))^{-1} |b_n| h||_inf / || |b_n|^{1/p} rho h||_p
};

struct WeightedEstimateReport {
  std::vector<WeightedEstimateRow> rows;
  double k1_fit = 0.0;
  double k2_fit = 0.0;
  double k1_trend = 0.0;  // least-squares slope of log K1 against log n
  double k2_trend = 0.0;
  double l_used = 0.0;
  bool pass = false;  // both trends <= kMaxTrend
};

/// Growth tolerated in the log-log trend before the K's count as growing.
inline constexpr double kMaxTrend = 0.1;

WeightedEstimateReport weighted_estimate_report(const DriftField& field, const std::vector<int>& n_list, double mu,
                                                double p, const WeightSpec& weight,
                                                const std::vector<GridFunction>& sample_h);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kOperatorCsvHeader = "operator,L,N,lambda_or_zeta,estimate,bound,pass";

struct OperatorRow {
  std::string op;
  double L = 0.0;
  int N = 0;
  double lambda_or_zeta = 0.0;
  double estimate = 0.0;
  double bound = 0.0;
  bool pass = false;
};

std::string to_csv_row(const OperatorRow& row);

}  // namespace driftlab
