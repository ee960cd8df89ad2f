#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "driftlab/fft.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/krylov.hpp"

using namespace driftlab;
using doctest::Approx;

TEST_CASE("grid geometry") {
  const Grid g(3, 4.0, 16);
  CHECK(g.spacing() == 0.5);
  CHECK(g.size() == 4096);
  CHECK(g.cell_volume() == 0.125);
  CHECK(g.coordinate(0) == -4.0);
  CHECK(g.coordinate(8) == 0.0);  // the origin is a node

  std::vector<int> idx(3);
  g.multi_index(g.flat_index(std::vector<int>{1, 2, 3}), idx);
  CHECK(idx == std::vector<int>{1, 2, 3});
  CHECK(g.flat_index(std::vector<int>{16, -1, 0}) == g.flat_index(std::vector<int>{0, 15, 0}));

  std::vector<double> x(3);
  const std::size_t i = g.nearest(std::vector<double>{0.5, -0.26, 3.9});
  g.point(i, x);
  CHECK(x == std::vector<double>{0.5, -0.5, -4.0});

  CHECK_THROWS(Grid(3, 4.0, 4));
  CHECK_THROWS(Grid(3, 4.0, 24));
}

TEST_CASE("grid function norms use the cell volume") {
  const Grid g(2, 1.0, 8);
  const auto one = GridFunction::from(g, [](std::span<const double>) { return 1.0; });
  CHECK(norm_lp(one, 2.0) == Approx(2.0));  // sqrt(area 4)
  CHECK(norm_lp(one, 1.0) == Approx(4.0));
  CHECK(norm_inf(one) == 1.0);
  CHECK(inner(one, one).real() == Approx(4.0));

  GridFunction v(g, 2);
  for (std::size_t k = 0; k < g.size(); ++k) {
    v.component(0)[k] = 3.0;
    v.component(1)[k] = 4.0;
  }
  CHECK(norm_inf(v) == Approx(5.0));
  CHECK(norm_inf(magnitude(v)) == Approx(5.0));
  CHECK(max_abs_diff(one, 2.0 * one) == Approx(1.0));
}

TEST_CASE("FFT round trip and a single mode") {
  const int n = 8, d = 2;
  std::vector<fft::cplx> a(64);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) a[i * 8 + j] = std::polar(1.0, 2 * std::numbers::pi * (i + 3.0 * j) / n);
  }
  auto b = a;
  fft::forward(b, d, n);
  for (int k = 0; k < 64; ++k) CHECK(std::abs(b[k]) == Approx(k == 1 * 8 + 3 ? 64.0 : 0.0).epsilon(1e-12));
  fft::inverse(b, d, n);
  for (int k = 0; k < 64; ++k) CHECK(std::abs(b[k] - a[k]) < 1e-13);
}

TEST_CASE("GMRES solves a nonsymmetric system") {
  const int n = 50;
  LinearMap A = [n](std::span<const std::complex<double>> x, std::span<std::complex<double>> y) {
    for (int i = 0; i < n; ++i) {
      y[i] = 4.0 * x[i];
      if (i > 0) y[i] -= 1.5 * x[i - 1];
      if (i + 1 < n) y[i] -= 0.5 * x[i + 1];
    }
  };
  std::vector<std::complex<double>> rhs(n, 1.0);
  const auto r = gmres(A, rhs, 1e-12, 10);
  CHECK(r.converged);
  CHECK(r.relative_residual < 1e-11);
  std::vector<std::complex<double>> check(n);
  A(r.x, check);
  for (int i = 0; i < n; ++i) CHECK(std::abs(check[i] - 1.0) < 1e-10);
}
