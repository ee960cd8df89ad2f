#include "driftlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace driftlab {

Grid::Grid(int d, double half_width, int points_per_axis) : d_(d), L_(half_width), N_(points_per_axis) {
  if (d < 1) throw std::invalid_argument("Grid: dimension must be positive");
  if (!(half_width > 0.0)) throw std::invalid_argument("Grid: half width must be positive");
  if (points_per_axis < 8 || (points_per_axis & (points_per_axis - 1)) != 0) {
    throw std::invalid_argument("Grid: points per axis must be a power of two >= 8, got " +
                                std::to_string(points_per_axis));
  }
  size_ = 1;
  for (int i = 0; i < d; ++i) size_ *= static_cast<std::size_t>(N_);
}

double Grid::cell_volume() const noexcept { return std::pow(spacing(), d_); }

void Grid::multi_index(std::size_t flat, std::span<int> idx) const {
  for (int k = d_ - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(flat % static_cast<std::size_t>(N_));
    flat /= static_cast<std::size_t>(N_);
  }
}

std::size_t Grid::flat_index(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int k = 0; k < d_; ++k) {
    const int i = ((idx[k] % N_) + N_) % N_;
    flat = flat * static_cast<std::size_t>(N_) + static_cast<std::size_t>(i);
  }
  return flat;
}

void Grid::point(std::size_t flat, std::span<double> x) const {
  const double h = spacing();
  for (int k = d_ - 1; k >= 0; --k) {
    x[k] = -L_ + h * static_cast<double>(flat % static_cast<std::size_t>(N_));
    flat /= static_cast<std::size_t>(N_);
  }
}

std::size_t Grid::nearest(std::span<const double> x) const {
  std::vector<int> idx(static_cast<std::size_t>(d_));
  for (int k = 0; k < d_; ++k) idx[k] = static_cast<int>(std::lround((x[k] + L_) / spacing()));
  return flat_index(idx);
}

double Grid::wavenumber(int k) const noexcept {
  const int m = k < N_ / 2 ? k : k - N_;
  return std::numbers::pi * m / L_;
}

GridFunction::GridFunction(Grid grid, int components)
    : grid_(grid), components_(components), values_(grid.size() * static_cast<std::size_t>(components)) {
  if (components != 1 && components != grid.dimension()) {
    throw std::invalid_argument("GridFunction: components must be 1 or d");
  }
}

GridFunction::GridFunction(Grid grid, int components, std::vector<cplx> values)
    : grid_(grid), components_(components), values_(std::move(values)) {
  if (components != 1 && components != grid.dimension()) {
    throw std::invalid_argument("GridFunction: components must be 1 or d");
  }
  if (values_.size() != grid.size() * static_cast<std::size_t>(components)) {
    throw std::invalid_argument("GridFunction: value count does not match grid");
  }
}

GridFunction GridFunction::from(const Grid& grid, const std::function<double(std::span<const double>)>& f) {
  GridFunction u(grid, 1);
  std::vector<double> x(static_cast<std::size_t>(grid.dimension()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, x);
    u.values_[i] = f(x);
  }
  return u;
}

std::span<const cplx> GridFunction::component(int k) const {
  return std::span<const cplx>(values_).subspan(static_cast<std::size_t>(k) * grid_.size(), grid_.size());
}

std::span<cplx> GridFunction::component(int k) {
  return std::span<cplx>(values_).subspan(static_cast<std::size_t>(k) * grid_.size(), grid_.size());
}

namespace {

void require_compatible(const GridFunction& a, const GridFunction& b) {
  if (!(a.grid() == b.grid()) || a.components() != b.components()) {
    throw std::invalid_argument("GridFunction: incompatible operands");
  }
}

/// Pointwise Euclidean magnitude squared at node i.
double node_norm2(const GridFunction& u, std::size_t i) {
  double s = 0.0;
  for (int k = 0; k < u.components(); ++k) s += std::norm(u.component(k)[i]);
  return s;
}

}  // namespace

GridFunction& GridFunction::operator+=(const GridFunction& o) {
  require_compatible(*this, o);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
  require_compatible(*this, o);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

GridFunction& GridFunction::operator*=(cplx s) {
  for (auto& v : values_) v *= s;
  return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(cplx s, GridFunction a) { return a *= s; }

double norm_lp(const GridFunction& u, double p) {
  if (std::isinf(p)) return norm_inf(u);
  if (!(p >= 1.0)) throw std::invalid_argument("norm_lp: p must be >= 1");
  double s = 0.0;
  for (std::size_t i = 0; i < u.grid().size(); ++i) s += std::pow(node_norm2(u, i), 0.5 * p);
  return std::pow(s * u.grid().cell_volume(), 1.0 / p);
}

double norm_inf(const GridFunction& u) {
  double m = 0.0;
  for (std::size_t i = 0; i < u.grid().size(); ++i) m = std::max(m, node_norm2(u, i));
  return std::sqrt(m);
}

double norm_l2(const GridFunction& u) {
  double s = 0.0;
  for (const auto& v : u.values()) s += std::norm(v);
  return std::sqrt(s * u.grid().cell_volume());
}

cplx inner(const GridFunction& u, const GridFunction& v) {
  require_compatible(u, v);
  cplx s = 0.0;
  for (std::size_t i = 0; i < u.values().size(); ++i) s += std::conj(u[i]) * v[i];
  return s * u.grid().cell_volume();
}

double max_abs_diff(const GridFunction& u, const GridFunction& v) {
  require_compatible(u, v);
  double m = 0.0;
  for (std::size_t i = 0; i < u.values().size(); ++i) m = std::max(m, std::abs(u[i] - v[i]));
  return m;
}

GridFunction magnitude(const GridFunction& v) {
  GridFunction out(v.grid(), 1);
  for (std::size_t i = 0; i < v.grid().size(); ++i) out[i] = std::sqrt(node_norm2(v, i));
  return out;
}

GridFunction sample_drift(const DriftField& field, const Grid& grid) {
  const int d = grid.dimension();
  if (field.dimension() != d) throw std::invalid_argument("sample_drift: dimension mismatch");
  const double h = grid.spacing();
  const double cap = 1.0 / h;
  GridFunction out(grid, d);
  std::vector<double> x(static_cast<std::size_t>(d)), y(x), v(x), acc(x);

  // Even count per axis keeps the sub-cell points off the node itself.
  constexpr int kSub = 8;
  std::size_t sub_total = 1;
  for (int k = 0; k < d; ++k) sub_total *= kSub;

  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, x);
    bool near_singular = false;
    for (const auto& s : field.singular_points()) {
      double worst = 0.0;
      for (int k = 0; k < d; ++k) worst = std::max(worst, std::abs(x[k] - s[k]));
      if (worst <= 0.5 * h) near_singular = true;
    }
    if (near_singular) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t used = 0;
      for (std::size_t j = 0; j < sub_total; ++j) {
        std::size_t rest = j;
        for (int k = 0; k < d; ++k) {
          const auto a = static_cast<double>(rest % kSub);
          rest /= kSub;
          y[k] = x[k] + h * ((a + 0.5) / kSub - 0.5);
        }
        if (field.is_singular(y)) continue;
        field.eval_unchecked(y, v);
        for (int k = 0; k < d; ++k) acc[k] += v[k];
        ++used;
      }
      for (int k = 0; k < d; ++k) v[k] = used ? acc[k] / static_cast<double>(used) : 0.0;
    } else {
      field.eval_unchecked(x, v);
    }
    double m = 0.0;
    for (int k = 0; k < d; ++k) m += v[k] * v[k];
    m = std::sqrt(m);
    const double scale = m > cap ? cap / m : 1.0;
    for (int k = 0; k < d; ++k) out.component(k)[i] = scale * v[k];
  }
  return out;
}

GridFunction sample_drift(const MollifiedDrift& field, const Grid& grid) {
  const int d = grid.dimension();
  if (field.dimension() != d) throw std::invalid_argument("sample_drift: dimension mismatch");
  GridFunction out(grid, d);
  std::vector<double> x(static_cast<std::size_t>(d)), v(x);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, x);
    field.eval_into(x, v);
    for (int k = 0; k < d; ++k) out.component(k)[i] = v[k];
  }
  return out;
}

}  // namespace driftlab
