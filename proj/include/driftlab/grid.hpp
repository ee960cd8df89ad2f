#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "driftlab/drift.hpp"

namespace driftlab {

using cplx = std::complex<double>;

/// Uniform periodic grid on [-L, L)^d with N points per axis; x_i = -L + i h.
/// With N even the origin is a grid point (index N/2 on every axis).
class Grid {
 public:
  Grid(int d, double half_width, int points_per_axis);

  int dimension() const noexcept { return d_; }
  double half_width() const noexcept { return L_; }
  int points_per_axis() const noexcept { return N_; }
  double spacing() const noexcept { return 2.0 * L_ / N_; }
  double cell_volume() const noexcept;
  std::size_t size() const noexcept { return size_; }

  double coordinate(int i) const noexcept { return -L_ + i * spacing(); }
  void point(std::size_t flat, std::span<double> x) const;
  void multi_index(std::size_t flat, std::span<int> idx) const;
  std::size_t flat_index(std::span<const int> idx) const;
  /// Flat index of the grid node nearest to x (periodic wrap).
  std::size_t nearest(std::span<const double> x) const;

  /// Angular wavenumber of FFT index k, in [-pi/h, pi/h).
  double wavenumber(int k) const noexcept;

  bool operator==(const Grid& o) const noexcept { return d_ == o.d_ && L_ == o.L_ && N_ == o.N_; }

 private:
  int d_;
  double L_;
  int N_;
  std::size_t size_;
};

/// Scalar (components = 1) or vector (components = d) samples on a grid,
/// stored component-major as complex numbers.
class GridFunction {
 public:
  GridFunction(Grid grid, int components = 1);
  GridFunction(Grid grid, int components, std::vector<cplx> values);

  static GridFunction from(const Grid& grid, const std::function<double(std::span<const double>)>& f);

  const Grid& grid() const noexcept { return grid_; }
  int components() const noexcept { return components_; }
  bool is_scalar() const noexcept { return components_ == 1; }

  std::span<const cplx> values() const noexcept { return values_; }
  std::span<cplx> values() noexcept { return values_; }
  std::span<const cplx> component(int k) const;
  std::span<cplx> component(int k);

  cplx& operator[](std::size_t i) { return values_[i]; }
  const cplx& operator[](std::size_t i) const { return values_[i]; }

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(cplx s);

 private:
  Grid grid_;
  int components_;
  std::vector<cplx> values_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(cplx s, GridFunction a);

/// (sum |u|^p h^d)^{1/p}; vector functions use the pointwise Euclidean norm.
double norm_lp(const GridFunction& u, double p);
double norm_inf(const GridFunction& u);
double norm_l2(const GridFunction& u);
/// sum conj(u) v h^d over all components.
cplx inner(const GridFunction& u, const GridFunction& v);
double max_abs_diff(const GridFunction& u, const GridFunction& v);

/// Pointwise Euclidean magnitude of a vector function, as a scalar function.
GridFunction magnitude(const GridFunction& v);

/// Raw drift sampled at the nodes. Nodes within half a cell of a singular
/// point take the cell average of b there (zero for odd fields such as the
/// model drift), and every sample is capped in magnitude at 1/h.
GridFunction sample_drift(const DriftField& field, const Grid& grid);

/// b_n at the nodes; bounded by n by construction.
GridFunction sample_drift(const MollifiedDrift& field, const Grid& grid);

}  // namespace driftlab
