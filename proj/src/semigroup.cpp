#include "driftlab/semigroup.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "driftlab/errors.hpp"
#include "driftlab/format.hpp"
#include "driftlab/operators.hpp"

namespace driftlab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct DiscreteGenerator::Impl {
  SparseMatrix A;
  std::vector<char> boundary;
};

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::implicit_diffusion_upwind_drift:
      return "implicit_diffusion_upwind_drift";
    case Scheme::explicit_rk:
      return "explicit_rk";
  }
  return "?";
}

std::string_view to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "absorbing"; }

DiscreteGenerator::DiscreteGenerator(const GridFunction& b, Boundary boundary)
    : grid_(b.grid()), boundary_(boundary) {
  const Grid& g = grid_;
  const int d = g.dimension();
  if (b.components() != d) throw std::invalid_argument("DiscreteGenerator: vector drift expected");
  const int N = g.points_per_axis();
  const double h = g.spacing();
  const double diff = 1.0 / (h * h);

  auto impl = std::make_shared<Impl>();
  impl->boundary.assign(g.size(), 0);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.size() * static_cast<std::size_t>(2 * d + 1));
  std::vector<int> idx(static_cast<std::size_t>(d)), nb(idx);

  for (std::size_t i = 0; i < g.size(); ++i) {
    g.multi_index(i, idx);
    bool on_face = false;
    for (int a = 0; a < d; ++a) on_face = on_face || idx[a] == 0;
    if (boundary == Boundary::absorbing && on_face) {
      impl->boundary[i] = 1;
      continue;  // zero row: the value stays at zero
    }
    double diag = 0.0;
    for (int a = 0; a < d; ++a) {
      const double bj = b.component(a)[i].real();
      nb = idx;
      nb[a] = (idx[a] + N - 1) % N;
      const auto down = static_cast<int>(g.flat_index(nb));
      nb[a] = (idx[a] + 1) % N;
      const auto up = static_cast<int>(g.flat_index(nb));
      // u_t = Delta u - b.grad u: transport with velocity b, upwinded.
      const double w_down = diff + (bj > 0.0 ? bj / h : 0.0);
      const double w_up = diff + (bj < 0.0 ? -bj / h : 0.0);
      trips.emplace_back(static_cast<int>(i), down, w_down);
      trips.emplace_back(static_cast<int>(i), up, w_up);
      diag -= w_down + w_up;
    }
    trips.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
    max_rate_ = std::max(max_rate_, -diag);
  }
  impl->A.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  impl->A.setFromTriplets(trips.begin(), trips.end());
  impl->A.makeCompressed();
  impl_ = std::move(impl);
}

bool DiscreteGenerator::is_boundary(std::size_t i) const { return impl_->boundary[i] != 0; }

void DiscreteGenerator::apply(const std::vector<double>& u, std::vector<double>& out) const {
  Eigen::Map<const Eigen::VectorXd> x(u.data(), static_cast<Eigen::Index>(u.size()));
  out.resize(u.size());
  Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out.size()));
  y.noalias() = impl_->A * x;
}

namespace {

std::vector<double> real_values(const GridFunction& f) {
  if (!f.is_scalar()) throw std::invalid_argument("semigroup: scalar initial datum expected");
  std::vector<double> u(f.grid().size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = f[i].real();
  return u;
}

GridFunction to_grid_function(const Grid& g, const std::vector<double>& u) {
  GridFunction out(g, 1);
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i];
  return out;
}

}  // namespace

Evolver::Evolver(const GridFunction& b, EvolutionConfig cfg) : cfg_(cfg), gen_(b, cfg.boundary) {
  if (!(b.grid() == cfg.grid)) throw std::invalid_argument("Evolver: drift grid does not match config");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("Evolver: dt must be positive");
  if (cfg.scheme == Scheme::explicit_rk && cfg.dt * gen_.max_rate() > 1.0) {
    throw StabilityViolation("explicit scheme needs dt * (2d/h^2 + sum|b_j|/h) <= 1; got " +
                             format_double(cfg.dt * gen_.max_rate()));
  }
}

void Evolver::step_explicit(std::vector<double>& u, double dt) const {
  // SSP-RK2: a convex combination of forward Euler steps, each monotone under the rate bound.
  std::vector<double> Au, u1(u.size()), Au1;
  gen_.apply(u, Au);
  for (std::size_t i = 0; i < u.size(); ++i) u1[i] = u[i] + dt * Au[i];
  gen_.apply(u1, Au1);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.5 * u[i] + 0.5 * (u1[i] + dt * Au1[i]);
}

std::vector<double> Evolver::advance(std::vector<double> u, double t) const {
  if (t < 0.0) throw std::invalid_argument("evolve: t must be nonnegative");
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (gen_.is_boundary(i)) u[i] = 0.0;
  }
  if (t == 0.0) return u;
  const auto steps = static_cast<long>(std::ceil(t / cfg_.dt - 1e-9));
  const double dt = t / static_cast<double>(steps);

  if (cfg_.scheme == Scheme::explicit_rk) {
    for (long k = 0; k < steps; ++k) step_explicit(u, dt);
    return u;
  }

  const auto n = static_cast<Eigen::Index>(u.size());
  SparseMatrix I(n, n);
  I.setIdentity();
  const SparseMatrix M = I - dt * gen_.impl().A;
  Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> solver;
  solver.setTolerance(cfg_.solver_tolerance);
  solver.setMaxIterations(1000);
  solver.compute(M);
  Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(u.data(), n);
  for (long k = 0; k < steps; ++k) {
    Eigen::VectorXd next = solver.solveWithGuess(x, x);
    if (solver.info() != Eigen::Success) {
      throw SolverFailure("implicit step: BiCGSTAB did not converge (error " + format_double(solver.error()) + ")");
    }
    x = std::move(next);
  }
  std::copy(x.data(), x.data() + n, u.begin());
  return u;
}

GridFunction Evolver::evolve(const GridFunction& f, double t) const {
  if (!(f.grid() == cfg_.grid)) throw std::invalid_argument("evolve: datum grid does not match config");
  if (t == 0.0) return f;
  return to_grid_function(cfg_.grid, advance(real_values(f), t));
}

std::vector<GridFunction> Evolver::snapshots(const GridFunction& f, const std::vector<double>& times) const {
  if (!(f.grid() == cfg_.grid)) throw std::invalid_argument("snapshots: datum grid does not match config");
  std::vector<GridFunction> out;
  std::vector<double> u = real_values(f);
  double now = 0.0;
  for (double t : times) {
    if (t < now) throw std::invalid_argument("snapshots: times must be nondecreasing");
    if (t == 0.0) {
      out.push_back(f);
      continue;
    }
    u = advance(std::move(u), t - now);
    now = t;
    out.push_back(to_grid_function(cfg_.grid, u));
  }
  return out;
}

GridFunction evolve(const GridFunction& b, const GridFunction& f, double t, const EvolutionConfig& cfg) {
  return Evolver(b, cfg).evolve(f, t);
}

GridFunction evolve(const MollifiedDrift& b, const GridFunction& f, double t, const EvolutionConfig& cfg) {
  return Evolver(sample_drift(b, cfg.grid), cfg).evolve(f, t);
}

GridFunction resolvent_direct(const GridFunction& b, double mu, const GridFunction& f, const EvolutionConfig& cfg,
                              ResolventMode mode) {
  if (!(mu > 0.0)) throw std::invalid_argument("resolvent_direct: mu must be positive");
  if (mode == ResolventMode::spectral) return spectral_resolvent_solve(b, mu, f, 1e-12);

  DiscreteGenerator gen(b, cfg.boundary);
  const auto n = static_cast<Eigen::Index>(b.grid().size());
  SparseMatrix I(n, n);
  I.setIdentity();
  const SparseMatrix M = mu * I - gen.impl().A;
  Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> solver;
  solver.setTolerance(1e-12);
  solver.setMaxIterations(5000);
  solver.compute(M);
  std::vector<double> rhs = real_values(f);
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (gen.is_boundary(i)) rhs[i] = 0.0;
  }
  Eigen::VectorXd x = solver.solve(Eigen::Map<Eigen::VectorXd>(rhs.data(), n));
  if (solver.info() != Eigen::Success) throw SolverFailure("resolvent_direct: BiCGSTAB did not converge");
  return to_grid_function(b.grid(), std::vector<double>(x.data(), x.data() + n));
}

std::vector<FellerRow> feller_convergence_report(const DriftField& field, const GridFunction& f,
                                                 const std::vector<int>& n_list, const std::vector<double>& t_grid,
                                                 const EvolutionConfig& cfg) {
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw std::invalid_argument("feller_convergence_report: n_list must increase");
  }
  std::vector<double> times = t_grid;
  std::sort(times.begin(), times.end());
  std::vector<std::vector<GridFunction>> runs;
  for (int n : n_list) {
    Evolver ev(sample_drift(MollifiedDrift(field, n), cfg.grid), cfg);
    runs.push_back(ev.snapshots(f, times));
  }
  std::vector<FellerRow> rows;
  for (std::size_t k = 1; k < runs.size(); ++k) {
    FellerRow row{n_list[k - 1], n_list[k], 0.0};
    for (std::size_t j = 0; j < times.size(); ++j) {
      row.sup_diff = std::max(row.sup_diff, max_abs_diff(runs[k - 1][j], runs[k][j]));
    }
    rows.push_back(row);
  }
  return rows;
}

bool strictly_decreasing(const std::vector<FellerRow>& rows) {
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (!(rows[k].sup_diff < rows[k - 1].sup_diff)) return false;
  }
  return true;
}

std::string to_csv_row(const FellerRow& row) {
  return std::to_string(row.n) + ',' + std::to_string(row.m) + ',' + format_double(row.sup_diff);
}

std::string snapshot_csv_header(int d) {
  std::string s = "t";
  for (int k = 1; k <= d; ++k) s += ",x" + std::to_string(k);
  return s + ",value";
}

std::string snapshot_csv_rows(double t, const GridFunction& u) {
  const Grid& g = u.grid();
  std::ostringstream s;
  std::vector<double> x(static_cast<std::size_t>(g.dimension()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    s << format_double(t);
    for (double v : x) s << ',' << format_double(v);
    s << ',' << format_double(u[i].real()) << '\n';
  }
  return s.str();
}

}  // namespace driftlab
