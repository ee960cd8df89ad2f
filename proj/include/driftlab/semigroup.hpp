#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/grid.hpp"

namespace driftlab {

enum class Scheme { implicit_diffusion_upwind_drift, explicit_rk };
enum class Boundary { periodic, absorbing };

std::string_view to_string(Scheme s);
std::string_view to_string(Boundary b);

struct EvolutionConfig {
  Grid grid{3, 4.0, 32};
  double dt = 1e-2;
  Scheme scheme = Scheme::implicit_diffusion_upwind_drift;
  Boundary boundary = Boundary::periodic;
  double solver_tolerance = 1e-13;  // relative residual of each implicit solve
};

/// Discrete generator A = Delta_h - b.grad_h: standard 2d+1 point Laplacian,
/// first-order upwind for the drift term (backward difference where b_j > 0).
/// Every row has nonnegative off-diagonals and zero sum, so I - dt A is an
/// M-matrix. Absorbing boundary: nodes with any index 0 (the identified faces
/// x_j = +-L) are held at zero.
class DiscreteGenerator {
 public:
  DiscreteGenerator(const GridFunction& b, Boundary boundary);

  const Grid& grid() const noexcept { return grid_; }
  Boundary boundary() const noexcept { return boundary_; }
  /// max over nodes of the total off-diagonal rate, 2d/h^2 + sum_j |b_j|/h.
  double max_rate() const noexcept { return max_rate_; }
  bool is_boundary(std::size_t i) const;

  void apply(const std::vector<double>& u, std::vector<double>& out) const;

  struct Impl;
  const Impl& impl() const noexcept { return *impl_; }

 private:
  Grid grid_;
  Boundary boundary_;
  double max_rate_ = 0.0;
  std::shared_ptr<const Impl> impl_;
};

/// Reusable time stepper for one (b, cfg) pair.
class Evolver {
 public:
  Evolver(const GridFunction& b, EvolutionConfig cfg);

  const EvolutionConfig& config() const noexcept { return cfg_; }
  const DiscreteGenerator& generator() const noexcept { return gen_; }

  /// u(t) from u(0) = f, with the step shortened uniformly so t is hit exactly.
  GridFunction evolve(const GridFunction& f, double t) const;

  /// u at each of the nondecreasing times, continuing one trajectory.
  std::vector<GridFunction> snapshots(const GridFunction& f, const std::vector<double>& times) const;

 private:
  std::vector<double> advance(std::vector<double> u, double t) const;
  void step_explicit(std::vector<double>& u, double dt) const;

  EvolutionConfig cfg_;
  DiscreteGenerator gen_;
};

GridFunction evolve(const GridFunction& b, const GridFunction& f, double t, const EvolutionConfig& cfg);
GridFunction evolve(const MollifiedDrift& b, const GridFunction& f, double t, const EvolutionConfig& cfg);

enum class ResolventMode {
  upwind,    // (mu - A) u = f with the evolution's generator, sparse solve
  spectral,  // spectral Laplacian and gradient, periodic; oracle for the factorized resolvent
};

/// Solves (mu - Delta + b.grad) u = f to relative residual 1e-10 or better.
GridFunction resolvent_direct(const GridFunction& b, double mu, const GridFunction& f, const EvolutionConfig& cfg,
                              ResolventMode mode = ResolventMode::upwind);

struct FellerRow {
  int n = 0;
  int m = 0;
  double sup_diff = 0.0;
};

/// sup over t_grid of ||u_n(t) - u_m(t)||_inf for consecutive pairs of n_list.
std::vector<FellerRow> feller_convergence_report(const DriftField& field, const GridFunction& f,
                                                 const std::vector<int>& n_list, const std::vector<double>& t_grid,
                                                 const EvolutionConfig& cfg);

/// True when every consecutive sup_diff is strictly smaller than the previous one.
bool strictly_decreasing(const std::vector<FellerRow>& rows);

inline constexpr std::string_view kConvergenceCsvHeader = "n,m,sup_diff";
std::string to_csv_row(const FellerRow& row);

/// "t,x1,...,xd,value"
std::string snapshot_csv_header(int d);
/// One row per grid node.
std::string snapshot_csv_rows(double t, const GridFunction& u);

}  // namespace driftlab
