#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/stats.hpp"
#include "oracle_values.hpp"

using namespace driftlab;
using doctest::Approx;

namespace {

const MollifiedDrift& brownian() {
  static const MollifiedDrift b(DriftField::model_radial(0.0, 3), 4);
  return b;
}

const MollifiedDrift& model_n8() {
  static const MollifiedDrift b(DriftField::model_radial(0.2, 3), 8);
  return b;
}

double sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace

TEST_CASE("statistics helpers") {
  const std::vector<double> flat(10, 2.5);
  const auto m = mean_ci(flat);
  CHECK(m.mean == 2.5);
  CHECK(m.ci == 0.0);
  CHECK(ci99_quantile(10) == Approx(oracle::kStudent99_df9).epsilon(1e-12));
  CHECK(ci99_quantile(20000) == Approx(oracle::kNormal99).epsilon(1e-12));

  const std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> ys{1.0, 3.0, 5.0, 7.0};
  const auto fit = least_squares(xs, ys);
  CHECK(fit.slope == Approx(2.0));
  CHECK(fit.intercept == Approx(1.0));
  CHECK(sample_variance(xs) == Approx(5.0 / 3.0));
}

TEST_CASE("Gaussian streams are reproducible and standard") {
  CHECK(path_seed(7, 3) == path_seed(7, 3));
  CHECK(path_seed(7, 3) != path_seed(7, 4));
  CHECK(path_seed(7, 3) != path_seed(8, 3));

  GaussianStream a(42), b(42);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = a.next();
    CHECK(z == b.next());
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(s2 / n == Approx(1.0).epsilon(0.01));
}

TEST_CASE("ensembles: determinism, replay, validation") {
  const std::vector<double> x0{0.5, 0.0, 0.0};
  const auto e1 = simulate(model_n8(), x0, 1e-3, 0.1, 64, 11, SimulationOptions{10, 0.0});
  const auto e2 = simulate(model_n8(), x0, 1e-3, 0.1, 64, 11, SimulationOptions{10, 0.0});
  const auto e3 = simulate(model_n8(), x0, 1e-3, 0.1, 64, 12, SimulationOptions{10, 0.0});
  CHECK(e1.snapshot_count() == 11);
  CHECK(e1.snapshot_time(10) == Approx(0.1));
  CHECK(e1.snapshot_index(0.05) == 5);
  CHECK_THROWS_AS(e1.snapshot_index(0.0505), std::invalid_argument);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < 64; ++i) {
    for (int k = 0; k < 3; ++k) {
      same = same && e1.state(i, 10)[k] == e2.state(i, 10)[k];
      differ = differ || e1.state(i, 10)[k] != e3.state(i, 10)[k];
    }
  }
  CHECK(same);
  CHECK(differ);

  // Path i does not depend on how many paths run alongside it.
  const auto small = simulate(model_n8(), x0, 1e-3, 0.1, 8, 11, SimulationOptions{10, 0.0});
  CHECK(small.state(5, 10)[0] == e1.state(5, 10)[0]);

  int visits = 0;
  e1.replay(3, [&](long step, std::span<const double> x) {
    ++visits;
    if (step % 10 == 0) {
      const auto stored = e1.state(3, static_cast<std::size_t>(step / 10));
      CHECK(x[0] == stored[0]);
      CHECK(x[2] == stored[2]);
    }
  });
  CHECK(visits == 101);

  CHECK_THROWS_AS(simulate(model_n8(), x0, 0.05, 0.1, 4, 1), StepTooLarge);
  CHECK_THROWS_AS(simulate(model_n8(), x0, 3e-3, 0.1, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(simulate(model_n8(), {0.5, 0.0}, 1e-3, 0.1, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(check_step_size(model_n8(), 1.0), StepTooLarge);
}

TEST_CASE("stopping freezes paths") {
  const std::vector<double> x0{0.05, 0.0, 0.0};
  const auto e = simulate(model_n8(), x0, 1e-3, 0.05, 16, 3, SimulationOptions{1, 0.5});
  CHECK(e.stopped_fraction() == 1.0);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(e.stop_step(i) == 0);
    CHECK(e.state(i, 50)[0] == 0.05);
    CHECK(e.drift_integral(i) == 0.0);
  }
}

TEST_CASE("Brownian control: second moment and exceedance") {
  const std::vector<double> x0{1.0, 0.0, 0.0};
  const auto e = simulate(brownian(), x0, 1e-3, 0.25, 4000, 5, SimulationOptions{250, 0.0});
  const auto m = expectation(e, sq, 0.25);
  CHECK(std::abs(m.mean - (1.0 + 6.0 * 0.25)) <= 3.0 * m.ci);

  const auto [lo, hi] = brownian_exceedance_bounds(3, 0.25, 2.0);
  CHECK(lo == Approx(oracle::kChi2Tail3_8).epsilon(1e-12));
  CHECK(hi == Approx(2.0 * oracle::kChi2Tail3_8).epsilon(1e-12));
  CHECK(brownian_exceedance_bounds(3, 1.0, 0.0).first == 1.0);

  const auto origin = simulate(brownian(), {0.0, 0.0, 0.0}, 1e-3, 0.25, 4000, 6, SimulationOptions{250, 0.0});
  const auto rows = explosion_check(origin, {1.5, 2.0});
  for (const auto& row : rows) {
    const auto [l, h] = brownian_exceedance_bounds(3, 0.25, row.R);
    CHECK(row.probability >= l - row.ci);
    CHECK(row.probability <= h + row.ci);
  }
  const double ratio = continuity_modulus_ratio(origin);
  CHECK(ratio > 1.0);
  CHECK(ratio < 10.0);
}

TEST_CASE("martingale residuals") {
  const std::vector<double> x0{0.5, 0.3, 0.2};
  const auto e = simulate(model_n8(), x0, 1e-3, 0.3, 3000, 9, SimulationOptions{300, 0.0});
  const std::vector<Window> w{{0.0, 0.1}, {0.1, 0.3}};
  for (const auto& f : {TestFunction::coordinate(0), TestFunction::product(0, 1), TestFunction::squared_norm(),
                        TestFunction::cutoff_polynomial(2, 3)}) {
    CAPTURE(f.label);
    CHECK(martingale_test(e, f, w).pass);
  }

  // Dropping the -Delta correction of |y|^2 leaves a drift of 2d t: detected.
  auto wrong = TestFunction::squared_norm();
  wrong.laplacian = [](std::span<const double>) { return 0.0; };
  const auto bad = martingale_test(e, wrong, {{0.0, 0.3}});
  CHECK_FALSE(bad.pass);
  CHECK(bad.windows[0].mean == Approx(6.0 * 0.3).epsilon(0.1));

  CHECK_THROWS_AS(martingale_test(e, TestFunction::coordinate(0), {{0.2, 0.1}}), std::invalid_argument);
}

TEST_CASE("test functions: analytic derivatives") {
  const auto f = TestFunction::cutoff_polynomial(2, 3);
  const std::vector<double> y{1.1, -0.6, 0.9};
  std::vector<double> g(3);
  f.gradient(y, g);
  const double h = 1e-6;
  double lap = 0.0;
  for (int i = 0; i < 3; ++i) {
    auto yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    CHECK(g[i] == Approx((f.value(yp) - f.value(ym)) / (2 * h)).epsilon(1e-6));
    yp[i] = y[i] + 1e-4;
    ym[i] = y[i] - 1e-4;
    lap += (f.value(yp) - 2 * f.value(y) + f.value(ym)) / 1e-8;
  }
  CHECK(f.laplacian(y) == Approx(lap).epsilon(1e-4));
  CHECK(TestFunction::squared_norm().laplacian(y) == 6.0);
}

TEST_CASE("radial slope and collapse experiments") {
  const auto s = radial_slope_experiment(0.0, 3, {1.0, 0.0, 0.0}, 8, 1e-3, 3000, 0.5, 17);
  CHECK(s.expected == 6.0);
  CHECK(s.stop_radius == 0.0);
  CHECK(s.fit_points == 51);
  CHECK(std::abs(s.slope - s.expected) <= std::max(3.0 * s.ci, 0.3));
  CHECK_FALSE(s.insufficient_survival);
  CHECK_THROWS_AS(radial_slope_experiment(0.2, 3, {0.0, 0.0, 0.0}, 8, 1e-3, 10, 0.5, 1), std::invalid_argument);

  const auto c = collapse_experiment(0.0, 3, {2, 4}, 1e-3, 500, 0.1, 100);
  REQUIRE(c.rows.size() == 2);
  // Level n runs on master seed seed + n.
  const auto direct = simulate(MollifiedDrift(DriftField::model_radial(0.0, 3), 4), {0.0, 0.0, 0.0}, 1e-3, 0.1, 500,
                               104, SimulationOptions{100, 0.0});
  CHECK(c.rows[1].mean_sq == expectation(direct, sq, 0.1).mean);
  CHECK_THROWS_AS(collapse_experiment(-1.0, 3, {2}, 1e-3, 10, 0.1, 1), std::invalid_argument);
}

TEST_CASE("weak error ladder and drift gaps") {
  const std::vector<double> x0{0.5, 0.0, 0.0};
  const auto first = [](std::span<const double> x) { return x[0]; };
  const auto free = weak_error_ladder(brownian(), x0, first, 0.1, 0.01, 2, 200, 3);
  REQUIRE(free.size() == 2);
  CHECK(free[0].dt_fine == 0.005);
  CHECK(std::abs(free[1].diff) < 1e-12);  // no drift: fine and coarse sums coincide

  const MollifiedDrift b4(DriftField::model_radial(0.2, 3), 4);
  const auto ladder = weak_error_ladder(b4, x0, sq, 0.2, 0.004, 3, 2000, 4);
  REQUIRE(ladder.size() == 3);
  // The weak error of the mild b_4 is below the noise; strong coupling shows
  // as a spread that shrinks with the step.
  for (const auto& level : ladder) CHECK(std::abs(level.diff) <= 3.0 * level.ci + 1e-4);
  CHECK(ladder[2].ci < ladder[0].ci);

  const auto e = simulate(model_n8(), x0, 1e-3, 0.1, 500, 5, SimulationOptions{100, 0.0});
  const auto gaps = drift_path_convergence(e, {2, 4, 8}, 0.1);
  REQUIRE(gaps.size() == 2);
  CHECK(gaps[1].mean_gap < gaps[0].mean_gap);
}

TEST_CASE("binary path dump layout") {
  const auto e = simulate(model_n8(), {0.5, 0.0, 0.0}, 1e-3, 0.01, 3, 2, SimulationOptions{5, 0.0});
  const std::string file = "sde_paths_test.bin";
  write_paths_binary(e, file);
  std::ifstream in(file, std::ios::binary);
  std::int64_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  CHECK(header[0] == 3);
  CHECK(header[1] == 3);
  CHECK(header[2] == 2);
  std::vector<double> body(3 * 3 * 3);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size() * sizeof(double)));
  CHECK(in.gcount() == static_cast<std::streamsize>(body.size() * sizeof(double)));
  CHECK(body[(1 * 3 + 2) * 3 + 0] == e.state(1, 2)[0]);
  in.close();
  std::remove(file.c_str());
}

TEST_CASE("SDE CSV rows") {
  const SdeRow row{"slope", 0.2, 3, 16, 1e-4, 50000, "slope", 5.6, 0.08};
  CHECK(to_csv_row(row) == "slope,0.2,3,16,0.0001,50000,slope,5.6,0.08");
  CHECK(kSdeCsvHeader == "experiment,c,d,n,dt,N,statistic,value,ci");
}
