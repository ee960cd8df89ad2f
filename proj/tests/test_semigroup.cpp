#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/operators.hpp"
#include "driftlab/semigroup.hpp"

using namespace driftlab;
using doctest::Approx;

namespace {

EvolutionConfig small_config(Boundary boundary = Boundary::periodic, double dt = 0.01) {
  EvolutionConfig cfg;
  cfg.grid = Grid(3, 4.0, 16);
  cfg.dt = dt;
  cfg.boundary = boundary;
  return cfg;
}

GridFunction bump(const Grid& g, double radius) {
  return GridFunction::from(g, [radius](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return mollifier_bump(s / (radius * radius));
  });
}

double min_value(const GridFunction& u) {
  double m = u[0].real();
  for (std::size_t i = 0; i < u.grid().size(); ++i) m = std::min(m, u[i].real());
  return m;
}

double sum(const GridFunction& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.grid().size(); ++i) s += u[i].real();
  return s;
}

}  // namespace

TEST_CASE("heat semigroup on a Fourier mode") {
  const auto cfg = small_config();
  const Grid& g = cfg.grid;
  const double k = 2.0 * std::numbers::pi / 8.0;
  const auto f = GridFunction::from(g, [k](std::span<const double> x) { return std::cos(k * x[0]); });
  const GridFunction zero(g, 3);
  const double t = 0.5;
  const auto u = evolve(zero, f, t, cfg);

  // Exact discrete answer: implicit Euler on the 7-point Laplacian eigenvalue.
  const double h = g.spacing();
  const double lam = (2.0 - 2.0 * std::cos(k * h)) / (h * h);
  const double discrete = std::pow(1.0 + cfg.dt * lam, -t / cfg.dt);
  CHECK(max_abs_diff(u, discrete * f) < 1e-10);
  CHECK(discrete == Approx(std::exp(-k * k * t)).epsilon(0.02));

  CHECK(max_abs_diff(evolve(zero, f, 0.0, cfg), f) == 0.0);
  CHECK(sum(evolve(zero, bump(g, 2.0), 0.3, cfg)) == Approx(sum(bump(g, 2.0))).epsilon(1e-11));
}

TEST_CASE("contraction, positivity and the semigroup property") {
  for (auto boundary : {Boundary::periodic, Boundary::absorbing}) {
    const auto cfg = small_config(boundary);
    const MollifiedDrift b(DriftField::model_radial(0.2, 3), 4);
    const auto f = bump(cfg.grid, 2.0);
    const Evolver ev(sample_drift(b, cfg.grid), cfg);
    for (const auto& u : ev.snapshots(f, {0.0, 0.05, 0.2, 0.5})) {
      CHECK(norm_inf(u) <= norm_inf(f) + 1e-8);
      CHECK(min_value(u) >= -1e-8);
    }
    const auto direct = ev.evolve(f, 0.3);
    const auto split = ev.evolve(ev.evolve(f, 0.1), 0.2);
    CHECK(max_abs_diff(direct, split) < 1e-10);
  }
}

TEST_CASE("explicit scheme: stability bound and agreement") {
  // h = 0.5, so the diffusive rate alone is 2d/h^2 = 24.
  auto cfg = small_config(Boundary::periodic, 0.05);
  cfg.scheme = Scheme::explicit_rk;
  const auto b = sample_drift(MollifiedDrift(DriftField::model_radial(0.2, 3), 4), cfg.grid);
  CHECK_THROWS_AS(Evolver(b, cfg), StabilityViolation);
  cfg.dt = 0.002;
  const auto f = bump(cfg.grid, 2.0);
  const auto ue = Evolver(b, cfg).evolve(f, 0.2);
  auto ci = cfg;
  ci.scheme = Scheme::implicit_diffusion_upwind_drift;
  const auto ui = Evolver(b, ci).evolve(f, 0.2);
  CHECK(max_abs_diff(ue, ui) < 5e-3);
  CHECK(min_value(ue) >= -1e-12);
}

TEST_CASE("direct resolvent") {
  const auto cfg = small_config();
  const Grid& g = cfg.grid;
  const GridFunction zero(g, 3);
  const auto one = GridFunction::from(g, [](std::span<const double>) { return 1.0; });
  CHECK(max_abs_diff(resolvent_direct(zero, 2.0, one, cfg), 0.5 * one) < 1e-12);

  const auto b = sample_drift(MollifiedDrift(DriftField::model_radial(0.2, 3), 4), g);
  const auto f1 = bump(g, 2.0);
  const auto f2 = bump(g, 1.5);
  const auto r12 = resolvent_direct(b, 1.5, f1 + f2, cfg);
  const auto r1 = resolvent_direct(b, 1.5, f1, cfg);
  const auto r2 = resolvent_direct(b, 1.5, f2, cfg);
  CHECK(max_abs_diff(r12, r1 + r2) < 1e-10);

  // Laplace oracle: sum_k dt e^{-mu t_k} u(t_k), truncated once e^{-mu T} < 1e-8.
  const double mu = 1.5;
  const double T = std::log(1e8) / mu;
  auto fine = cfg;
  fine.dt = 0.005;
  const Evolver ev(b, fine);
  std::vector<double> times;
  for (double t = fine.dt; t <= T; t += fine.dt) times.push_back(t);
  GridFunction laplace(g, 1);
  const auto snaps = ev.snapshots(f1, times);
  for (std::size_t k = 0; k < snaps.size(); ++k) laplace += (fine.dt * std::exp(-mu * times[k])) * snaps[k];
  // The implicit-Euler Laplace sum equals (mu' - A)^{-1} with mu' = (e^{mu dt} - 1)/dt, to O(dt).
  const double q = std::exp(-mu * fine.dt);
  const auto exact = q * resolvent_direct(b, (1.0 - q) / fine.dt, f1, cfg);
  CHECK(norm_l2(laplace - exact) / norm_l2(exact) < 1e-6);
  CHECK(norm_l2(laplace - r1) / norm_l2(r1) < 1e-2);

  const auto spectral = resolvent_direct(b, 1.5, f1, cfg, ResolventMode::spectral);
  CHECK(norm_l2(spectral - r1) / norm_l2(r1) < 0.05);
}

TEST_CASE("Feller convergence report") {
  auto cfg = small_config(Boundary::absorbing, 0.02);
  const auto f = bump(cfg.grid, 2.0);

  const auto zero_t = feller_convergence_report(DriftField::model_radial(0.2, 3), f, {2, 4}, {0.0}, cfg);
  REQUIRE(zero_t.size() == 1);
  CHECK(zero_t[0].sup_diff == 0.0);

  // A constant field is reproduced exactly by every b_n on the box once n exceeds its size.
  const auto constant = DriftField::bounded_smooth({0.3, 0.0, 0.0});
  const auto stable = feller_convergence_report(constant, f, {8, 16}, {0.0, 0.2}, cfg);
  CHECK(stable[0].sup_diff < 1e-9);

  const auto rows = feller_convergence_report(DriftField::model_radial(0.2, 3), f, {2, 4, 8}, {0.0, 0.1, 0.2}, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n == 2);
  CHECK(rows[1].m == 8);
  CHECK(strictly_decreasing(rows));
  CHECK_FALSE(strictly_decreasing({{2, 4, 0.1}, {4, 8, 0.1}}));
  CHECK_THROWS_AS(feller_convergence_report(DriftField::model_radial(0.2, 3), f, {4, 2}, {0.1}, cfg),
                  std::invalid_argument);

  CHECK(to_csv_row(rows[0]).rfind("2,4,", 0) == 0);
  CHECK(kConvergenceCsvHeader == "n,m,sup_diff");
  CHECK(snapshot_csv_header(3) == "t,x1,x2,x3,value");
}
