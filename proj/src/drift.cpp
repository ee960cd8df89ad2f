#include "driftlab/drift.hpp"

#include "driftlab/errors.hpp"
#include "driftlab/fft.hpp"
#include "driftlab/format.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <tuple>

namespace driftlab {
namespace {

constexpr double kPi = std::numbers::pi;

void require_dimension(int d) {
  if (d < 3) throw DimensionTooSmall("dimension must be at least 3, got " + std::to_string(d));
}

/// Surface area of the unit sphere S^{k-1} in R^k.
double sphere_area(int k) {
  return 2.0 * std::pow(kPi, 0.5 * k) / std::tgamma(0.5 * k);
}

/// Adaptive Gauss-Kronrod; `floor` is an absolute error level below which the
/// result is accepted regardless of the relative test (integrands of size O(1)).
template <class F>
double integrate(F&& f, double a, double b, double tol, const char* what, double floor = 1e-15) {
  if (!(b > a)) return 0.0;
  double error = 0.0;
  double l1 = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, tol, &error, &l1);
  if (!std::isfinite(value) || error > std::max(1e3 * tol * l1, floor)) {
    throw QuadratureFailure(std::string(what) + ": adaptive quadrature did not converge");
  }
  return value;
}

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

double m_d_constant(int d) {
  require_dimension(d);
  const double dd = d;
  return std::sqrt(kPi) / std::sqrt(2.0 * std::numbers::e) * std::pow(dd, 0.5 * dd) *
         std::pow(dd - 1.0, 0.5 * (1.0 - dd));
}

double kappa_d(int d) {
  require_dimension(d);
  return static_cast<double>(d) / static_cast<double>(d - 1);
}

Thresholds admissibility_threshold(int d) {
  const double md = m_d_constant(d);
  const double dm1 = d - 1.0;
  const double dm2 = d - 2.0;
  return {4.0 * dm2 / (md * dm1 * dm1), 2.0 * dm2 * dm2 / (md * dm1 * dm1)};
}

double c_max_squared_reading(int d) {
  const double md = m_d_constant(d);
  const double dm2 = d - 2.0;
  return std::pow(dm2, 1.5) / ((d - 1.0) * std::sqrt(md));
}

std::string_view to_string(ClassTag tag) {
  switch (tag) {
    case ClassTag::weak_form_bounded: return "weak_form_bounded";
    case ClassTag::form_bounded: return "form_bounded";
    case ClassTag::kato: return "kato";
  }
  return "unknown";
}

Certificate model_certificate(double c, int d) {
  require_dimension(d);
  if (!(c >= 0.0)) throw std::invalid_argument("model_certificate: c must be nonnegative");
  const double dm2 = d - 2.0;
  const auto thr = admissibility_threshold(d);

  Certificate cert;
  cert.class_tag = ClassTag::weak_form_bounded;
  cert.c = c;
  cert.d = d;
  cert.delta = 4.0 * c * c / (dm2 * dm2);
  cert.lambda = 1.0;
  cert.threshold_used = thr.c_max;
  cert.admissible = c < thr.c_max;

  const auto fb = form_bounded_certificate(c, d);
  std::ostringstream notes;
  notes << "c_max_stated=" << format_double(thr.c_max)
        << ";c_max_squared_reading=" << format_double(c_max_squared_reading(d))
        << ";delta_sqrt_reading=" << format_double(2.0 * c / dm2)
        << ";form_bounded_delta1=" << format_double(fb.delta)
        << ";form_bounded_admissible=" << (fb.admissible ? "true" : "false");
  cert.notes = notes.str();
  return cert;
}

Certificate form_bounded_certificate(double c, int d) {
  require_dimension(d);
  if (!(c >= 0.0)) throw std::invalid_argument("form_bounded_certificate: c must be nonnegative");
  const double dm2 = d - 2.0;
  Certificate cert;
  cert.class_tag = ClassTag::form_bounded;
  cert.c = c;
  cert.d = d;
  cert.delta = 4.0 * c * c / (dm2 * dm2);
  cert.lambda = 1.0;
  cert.threshold_used = std::min(1.0, 4.0 / (dm2 * dm2));
  cert.admissible = cert.delta < cert.threshold_used;
  return cert;
}

std::string to_csv_row(const Certificate& cert) {
  std::ostringstream row;
  row << to_string(cert.class_tag) << ',' << format_double(cert.c) << ',' << cert.d << ','
      << format_double(cert.delta) << ',' << format_double(cert.lambda) << ','
      << (cert.admissible ? "true" : "false") << ',' << format_double(cert.threshold_used);
  return row.str();
}

// ---------------------------------------------------------------------------
// DriftField
// ---------------------------------------------------------------------------

DriftField::DriftField(int d, Kind kind, std::vector<Vec> singular)
    : d_(d), kind_(std::move(kind)), singular_(std::move(singular)) {}

DriftField DriftField::model_radial(double c, int d) {
  require_dimension(d);
  if (!(c >= 0.0)) throw std::invalid_argument("model_radial: c must be nonnegative");
  return DriftField(d, ModelRadial{c}, {Vec(static_cast<std::size_t>(d), 0.0)});
}

DriftField DriftField::bounded_smooth(Vec amplitude, double width) {
  const int d = static_cast<int>(amplitude.size());
  require_dimension(d);
  return DriftField(d, BoundedSmooth{std::move(amplitude), width}, {});
}

DriftField DriftField::custom(int d,
                              std::function<void(std::span<const double>, std::span<double>)> eval,
                              std::vector<Vec> singular_points, std::string label) {
  require_dimension(d);
  for (const auto& p : singular_points) {
    if (static_cast<int>(p.size()) != d) throw std::invalid_argument("singular point dimension");
  }
  return DriftField(d, CustomField{std::move(eval), std::move(label)}, std::move(singular_points));
}

double DriftField::model_c() const noexcept {
  if (const auto* m = std::get_if<ModelRadial>(&kind_)) return m->c;
  return 0.0;
}

bool DriftField::is_singular(std::span<const double> x) const {
  for (const auto& p : singular_) {
    bool same = true;
    for (int i = 0; i < d_; ++i) {
      if (x[static_cast<std::size_t>(i)] != p[static_cast<std::size_t>(i)]) {
        same = false;
        break;
      }
    }
    if (same) return true;
  }
  return false;
}

void DriftField::eval_unchecked(std::span<const double> x, std::span<double> out) const {
  if (const auto* m = std::get_if<ModelRadial>(&kind_)) {
    double r2 = 0.0;
    for (int i = 0; i < d_; ++i) r2 += x[i] * x[i];
    const double s = m->c / r2;
    for (int i = 0; i < d_; ++i) out[i] = s * x[i];
  } else if (const auto* b = std::get_if<BoundedSmooth>(&kind_)) {
    double w = 1.0;
    if (b->width > 0.0) {
      double r2 = 0.0;
      for (int i = 0; i < d_; ++i) r2 += x[i] * x[i];
      w = std::exp(-r2 / (b->width * b->width));
    }
    for (int i = 0; i < d_; ++i) out[i] = w * b->amplitude[static_cast<std::size_t>(i)];
  } else {
    std::get<CustomField>(kind_).eval(x, out);
  }
}

std::string DriftField::descriptor() const {
  std::ostringstream s;
  if (const auto* m = std::get_if<ModelRadial>(&kind_)) {
    s << "kind=model_radial c=" << format_double_exact(m->c) << " d=" << d_;
  } else if (const auto* b = std::get_if<BoundedSmooth>(&kind_)) {
    s << "kind=bounded_smooth amplitude=";
    for (std::size_t i = 0; i < b->amplitude.size(); ++i) {
      if (i) s << ',';
      s << format_double_exact(b->amplitude[i]);
    }
    s << " width=" << format_double_exact(b->width) << " d=" << d_;
  } else {
    s << "kind=custom label=" << std::get<CustomField>(kind_).label << " d=" << d_;
  }
  return s.str();
}

Vec eval_drift(const DriftField& field, std::span<const double> x) {
  if (static_cast<int>(x.size()) != field.dimension()) {
    throw std::invalid_argument("eval_drift: point dimension mismatch");
  }
  if (field.is_singular(x)) throw SingularPoint("eval_drift: x lies on the singular set");
  Vec out(x.size());
  field.eval_unchecked(x, out);
  return out;
}

// ---------------------------------------------------------------------------
// Mollifier
// ---------------------------------------------------------------------------

double default_epsilon(int n) {
  if (n < 1) throw std::invalid_argument("truncation level n must be positive");
  return 1.0 / (n + 1.0);
}

double mollifier_bump(double r2) noexcept {
  if (r2 >= 1.0) return 0.0;
  return std::exp(1.0 / (r2 - 1.0));
}

double mollifier_normalization(int d) {
  static std::mutex mutex;
  static std::map<int, double> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(d); it != cache.end()) return it->second;
  const double radial = integrate(
      [d](double r) { return mollifier_bump(r * r) * std::pow(r, d - 1); }, 0.0, 1.0, 1e-12,
      "mollifier normalization");
  const double c = 1.0 / (sphere_area(d) * radial);
  cache.emplace(d, c);
  return c;
}

namespace {

/// Moments P_k(t) = \int_0^t exp(1/(tau^2-1)) tau^k dtau for odd k <= d on [0,1],
/// tabulated cumulatively and Hermite-interpolated with the exact slope.
class BumpMoments {
 public:
  static const BumpMoments& for_dimension(int d) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<BumpMoments>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[d];
    if (!slot) slot.reset(new BumpMoments(d));
    return *slot;
  }

  /// P_k(t) for odd k, t clamped to [0,1].
  double operator()(int k, double t) const {
    t = std::clamp(t, 0.0, 1.0);
    const auto& vals = values_[static_cast<std::size_t>(k / 2)];
    const double pos = t * kNodes;
    const auto j = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(kNodes - 1));
    const double x = pos - static_cast<double>(j);
    const double h = 1.0 / kNodes;
    const double t0 = static_cast<double>(j) * h;
    const double t1 = t0 + h;
    const double m0 = slope(k, t0) * h;
    const double m1 = slope(k, t1) * h;
    const double x2 = x * x, x3 = x2 * x;
    return (2 * x3 - 3 * x2 + 1) * vals[j] + (x3 - 2 * x2 + x) * m0 + (-2 * x3 + 3 * x2) * vals[j + 1] +
           (x3 - x2) * m1;
  }

 private:
  static constexpr int kNodes = 4096;

  static double slope(int k, double t) { return mollifier_bump(t * t) * std::pow(t, k); }

  explicit BumpMoments(int d) {
    for (int k = 1; k <= d; k += 2) {
      std::vector<double> vals(kNodes + 1, 0.0);
      double acc = 0.0;
      for (int j = 0; j < kNodes; ++j) {
        const double a = static_cast<double>(j) / kNodes;
        // Panels are short and the integrand smooth: a fixed rule is exact to rounding.
        acc += boost::math::quadrature::gauss<double, 20>::integrate(
            [k](double t) { return slope(k, t); }, a, a + 1.0 / kNodes);
        vals[static_cast<std::size_t>(j + 1)] = acc;
      }
      values_.push_back(std::move(vals));
    }
  }

  std::vector<std::vector<double>> values_;  // index k/2
};

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

/// \int_0^{theta_max} sin^{d-2}(theta) cos(theta) bump(|r e_1 - s w|^2/eps^2) dtheta.
/// Odd d: exact reduction to bump moments via u = |r e_1 - s w|, where
/// sin^{d-3} cos is a polynomial in u^2. Even d: 64-point Gauss-Legendre in theta.
double angular_integral(int d, double r, double s, double epsilon) {
  const double eps2 = epsilon * epsilon;
  const double u_lo = std::abs(r - s);
  const double u_hi = std::min(epsilon, r + s);
  if (!(u_hi > u_lo)) return 0.0;

  if (d % 2 == 1) {
    const auto& moments = BumpMoments::for_dimension(d);
    const int m = (d - 3) / 2;
    // cos(theta) = alpha - beta u^2
    const double alpha = (r * r + s * s) / (2.0 * r * s);
    const double beta = 1.0 / (2.0 * r * s);
    // (1 - C^2)^m C = sum_j binom(m,j) (-1)^j C^{2j+1}, C^k = sum_i binom(k,i) alpha^{k-i} (-beta u^2)^i
    std::vector<double> coef(static_cast<std::size_t>(d), 0.0);  // coefficient of u^{2i}
    for (int j = 0; j <= m; ++j) {
      const int k = 2 * j + 1;
      const double outer = binomial(m, j) * (j % 2 ? -1.0 : 1.0);
      for (int i = 0; i <= k; ++i) {
        coef[static_cast<std::size_t>(i)] +=
            outer * binomial(k, i) * std::pow(alpha, k - i) * std::pow(-beta, i);
      }
    }
    const double t_lo = u_lo / epsilon;
    const double t_hi = u_hi / epsilon;
    double total = 0.0;
    for (int i = 0; i <= 2 * m + 1; ++i) {
      const int k = 2 * i + 1;
      const double mom = moments(k, t_hi) - moments(k, t_lo);
      total += coef[static_cast<std::size_t>(i)] * std::pow(epsilon, k + 1) * mom;
    }
    // sin(theta) dtheta = u du / (r s)
    return total / (r * s);
  }

  static const auto rule = [] {
    constexpr int q = 64;
    std::vector<std::pair<double, double>> nodes;
    auto zeros = boost::math::legendre_p_zeros<double>(q);
    for (double z : zeros) {
      const double dp = boost::math::legendre_p_prime(q, z);
      const double w = 2.0 / ((1.0 - z * z) * dp * dp);
      nodes.emplace_back(z, w);
      if (z != 0.0) nodes.emplace_back(-z, w);
    }
    return nodes;
  }();
  const double kappa = (r * r + s * s - eps2) / (2.0 * r * s);
  if (kappa >= 1.0) return 0.0;
  const double theta_max = kappa <= -1.0 ? kPi : std::acos(kappa);
  const double half = 0.5 * theta_max;
  double total = 0.0;
  for (const auto& [z, w] : rule) {
    const double theta = half * (z + 1.0);
    const double ct = std::cos(theta);
    const double u2 = (r * r + s * s - 2.0 * r * s * ct) / eps2;
    total += w * std::pow(std::sin(theta), d - 2) * ct * mollifier_bump(u2);
  }
  return half * total;
}

}  // namespace

double mollified_radial_profile(double c, int d, int n, double epsilon, double r) {
  require_dimension(d);
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (c == 0.0 || r <= 0.0) return 0.0;
  const double lo = std::max({c / n, r - epsilon, 0.0});
  const double hi = std::min(static_cast<double>(n), r + epsilon);
  if (!(hi > lo)) return 0.0;

  auto integrand = [&](double s) { return std::pow(s, d - 2) * angular_integral(d, r, s, epsilon); };

  // The s-integrand has kinks where the angular range changes shape.
  std::vector<double> cuts{lo};
  for (double k : {epsilon - r, r}) {
    if (k > lo && k < hi) cuts.push_back(k);
  }
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  // Pieces can be negligible next to their neighbours, so the error test is on the sum.
  double total = 0.0, total_error = 0.0, total_l1 = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double error = 0.0, l1 = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, cuts[i], cuts[i + 1], 12,
                                                                           1e-11, &error, &l1);
    total_error += error;
    total_l1 += l1;
  }
  const double scale = mollifier_normalization(d) / std::pow(epsilon, d) * sphere_area(d - 1);
  // Absolute floor: 1e-10 per unit of c in the profile itself.
  if (!std::isfinite(total) || total_error > 1e-7 * total_l1 + 1e-10 / scale) {
    throw QuadratureFailure("mollified drift: adaptive quadrature did not converge");
  }
  return c * scale * total;
}

struct MollifiedDrift::RadialTable {
  double step = 0.0;
  double r_max = 0.0;
  double cap = 0.0;
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline;

  double operator()(double r) const {
    if (r >= r_max || r <= 0.0) return 0.0;
    const double v = spline(r);
    return std::clamp(v, -cap, cap);
  }
};

struct MollifiedDrift::Cubature {
  int d = 3;
  std::vector<double> nodes;  // flattened, d per node, inside the unit ball
  std::vector<double> weights;
};

namespace {

constexpr int kTableDensity = 48;  // table nodes per mollifier radius

}  // namespace

MollifiedDrift::MollifiedDrift(DriftField base, int n)
    : MollifiedDrift(std::move(base), n, default_epsilon(n)) {}

MollifiedDrift::MollifiedDrift(DriftField base, int n, double epsilon, int quadrature_order)
    : base_(std::move(base)), n_(n), epsilon_(epsilon), quadrature_order_(quadrature_order) {
  if (n < 1) throw std::invalid_argument("MollifiedDrift: n must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("MollifiedDrift: epsilon must be positive");
  if (quadrature_order < 2) throw std::invalid_argument("MollifiedDrift: quadrature order >= 2");
  const int d = base_.dimension();

  if (base_.is_model_radial()) {
    const double c = base_.model_c();
    // Tables are pure functions of (c, d, n, epsilon) and cost seconds to build.
    static std::mutex cache_mutex;
    static std::map<std::tuple<double, int, int, double>, std::pair<std::shared_ptr<const RadialTable>, double>>
        cache;
    const auto key = std::make_tuple(c, d, n, epsilon);
    std::lock_guard lock(cache_mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      table_ = it->second.first;
      sup_bound_ = it->second.second;
      return;
    }
    const double r_max = n + epsilon;
    const double step = epsilon / kTableDensity;
    const auto count = static_cast<std::size_t>(std::ceil(r_max / step)) + 4;
    std::vector<double> values(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = mollified_radial_profile(c, d, n, epsilon, static_cast<double>(i) * step);
    }
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    auto table = std::make_shared<RadialTable>(RadialTable{
        step, r_max, static_cast<double>(n),
        boost::math::interpolators::cardinal_cubic_b_spline<double>(
            values.begin(), values.end(), 0.0, step, std::numeric_limits<double>::quiet_NaN(), 0.0)});
    sup_bound_ = std::min(static_cast<double>(n), peak);
    table_ = std::move(table);
    cache.emplace(key, std::make_pair(table_, sup_bound_));
    return;
  }

  // Tensor Gauss-Legendre on [-1,1]^d weighted by the bump, renormalized so
  // the discrete weights sum to one (constants are reproduced exactly).
  const int q = quadrature_order;
  std::vector<double> x1(static_cast<std::size_t>(q));
  std::vector<double> w1(static_cast<std::size_t>(q));
  {
    auto zeros = boost::math::legendre_p_zeros<double>(q);
    std::vector<double> all;
    for (double z : zeros) {
      all.push_back(z);
      if (z != 0.0) all.push_back(-z);
    }
    std::sort(all.begin(), all.end());
    for (int i = 0; i < q; ++i) {
      const double x = all[static_cast<std::size_t>(i)];
      const double dp = boost::math::legendre_p_prime(q, x);
      x1[static_cast<std::size_t>(i)] = x;
      w1[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
  auto cub = std::make_shared<Cubature>();
  cub->d = d;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> z(static_cast<std::size_t>(d));
  while (true) {
    double w = 1.0;
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      z[k] = x1[idx[k]];
      w *= w1[idx[k]];
      r2 += z[k] * z[k];
    }
    if (r2 < 1.0) {
      cub->nodes.insert(cub->nodes.end(), z.begin(), z.end());
      cub->weights.push_back(w * mollifier_bump(r2));
    }
    int k = d - 1;
    while (k >= 0 && ++idx[k] == q) idx[k--] = 0;
    if (k < 0) break;
  }
  const double total = std::accumulate(cub->weights.begin(), cub->weights.end(), 0.0);
  for (double& w : cub->weights) w /= total;
  cubature_ = std::move(cub);

  if (const auto* b = std::get_if<BoundedSmooth>(&base_.kind())) {
    sup_bound_ = std::min(static_cast<double>(n), norm(b->amplitude));
  } else {
    sup_bound_ = n;
  }
}

void MollifiedDrift::eval_into(std::span<const double> x, std::span<double> out) const {
  const int d = dimension();
  if (table_) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) r2 += x[i] * x[i];
    const double r = std::sqrt(r2);
    const double phi = (*table_)(r);
    const double s = r > 0.0 ? phi / r : 0.0;
    for (int i = 0; i < d; ++i) out[i] = s * x[i];
    return;
  }
  const auto& cub = *cubature_;
  const double nn = n_;
  double y[16];
  double v[16];
  if (d > 16) throw std::invalid_argument("MollifiedDrift: dimension above 16 unsupported");
  for (int i = 0; i < d; ++i) out[i] = 0.0;
  for (std::size_t j = 0; j < cub.weights.size(); ++j) {
    const double* z = cub.nodes.data() + j * static_cast<std::size_t>(d);
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      y[i] = x[i] - epsilon_ * z[i];
      r2 += y[i] * y[i];
    }
    if (r2 > nn * nn) continue;
    std::span<const double> ys(y, static_cast<std::size_t>(d));
    if (base_.is_singular(ys)) continue;
    base_.eval_unchecked(ys, std::span<double>(v, static_cast<std::size_t>(d)));
    double m2 = 0.0;
    for (int i = 0; i < d; ++i) m2 += v[i] * v[i];
    if (m2 > nn * nn) continue;
    for (int i = 0; i < d; ++i) out[i] += cub.weights[j] * v[i];
  }
}

Vec MollifiedDrift::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dimension()) {
    throw std::invalid_argument("MollifiedDrift::eval: dimension mismatch");
  }
  Vec out(x.size());
  eval_into(x, out);
  return out;
}

double MollifiedDrift::deviation_radius() const noexcept {
  if (!base_.is_model_radial() || base_.model_c() == 0.0) return 0.0;
  return std::abs(base_.model_c()) / n_ + epsilon_;
}

double MollifiedDrift::radial_profile(double r) const {
  if (!table_) throw std::logic_error("radial_profile: field is not the model field");
  return (*table_)(r);
}

std::string MollifiedDrift::descriptor() const {
  std::ostringstream s;
  s << base_.descriptor() << " n=" << n_ << " epsilon=" << format_double_exact(epsilon_);
  return s.str();
}

Vec mollified_eval(const MollifiedDrift& m, std::span<const double> x) { return m.eval(x); }

MollifiedDrift parse_drift_descriptor(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("descriptor token '" + token + "'");
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("descriptor missing key '" + key + "'");
    return it->second;
  };
  try {
    const std::string& kind = get("kind");
    const int n = std::stoi(get("n"));
    std::optional<double> eps;
    if (kv.count("epsilon")) eps = std::stod(kv["epsilon"]);
    if (kind == "model_radial") {
      auto field = DriftField::model_radial(std::stod(get("c")), std::stoi(get("d")));
      return eps ? MollifiedDrift(field, n, *eps) : MollifiedDrift(field, n);
    }
    if (kind == "bounded_smooth") {
      Vec amp;
      std::istringstream list(get("amplitude"));
      std::string item;
      while (std::getline(list, item, ',')) amp.push_back(std::stod(item));
      const double width = kv.count("width") ? std::stod(kv["width"]) : 0.0;
      auto field = DriftField::bounded_smooth(std::move(amp), width);
      return eps ? MollifiedDrift(field, n, *eps) : MollifiedDrift(field, n);
    }
    throw ConfigError("descriptor kind '" + kind + "' cannot be parsed");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("descriptor value: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(std::string("descriptor value: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

namespace {

/// Bump on (1,2) whose normalized tail integral defines upsilon.
double step_bump(double t) {
  if (t <= 1.0 || t >= 2.0) return 0.0;
  const double u = 2.0 * t - 3.0;
  return std::exp(1.0 / (u * u - 1.0));
}

double step_bump_derivative(double t) {
  if (t <= 1.0 || t >= 2.0) return 0.0;
  const double u = 2.0 * t - 3.0;
  const double q = u * u - 1.0;
  return -4.0 * u * std::exp(1.0 / q) / (q * q);
}

/// Cumulative table of upsilon on [1,2], Hermite-interpolated with exact slopes.
class StepTable {
 public:
  static const StepTable& instance() {
    static const StepTable table;
    return table;
  }

  double value(double s) const {
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    const double pos = (s - 1.0) * kNodes;
    const auto j = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(kNodes - 1));
    const double t = pos - static_cast<double>(j);
    const double h = 1.0 / kNodes;
    const double y0 = values_[j], y1 = values_[j + 1];
    const double m0 = slopes_[j] * h, m1 = slopes_[j + 1] * h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 +
           (t3 - t2) * m1;
  }

  double derivative(double s) const { return -step_bump(s) / mass_; }
  double second_derivative(double s) const { return -step_bump_derivative(s) / mass_; }

 private:
  static constexpr int kNodes = 2048;

  StepTable() {
    values_.assign(kNodes + 1, 0.0);
    slopes_.assign(kNodes + 1, 0.0);
    const double h = 1.0 / kNodes;
    // Panels are narrow and the integrand smooth, so fixed Gauss is exact to rounding.
    std::vector<double> tail(kNodes + 1, 0.0);
    for (int j = kNodes - 1; j >= 0; --j) {
      const double a = 1.0 + j * h;
      tail[static_cast<std::size_t>(j)] = tail[static_cast<std::size_t>(j) + 1] +
                                          boost::math::quadrature::gauss<double, 20>::integrate(step_bump, a, a + h);
    }
    mass_ = tail[0];
    for (int j = 0; j <= kNodes; ++j) values_[static_cast<std::size_t>(j)] = tail[static_cast<std::size_t>(j)] / mass_;
    values_[0] = 1.0;
    for (int j = 0; j <= kNodes; ++j) slopes_[static_cast<std::size_t>(j)] = derivative(1.0 + j * h);
  }

  double mass_ = 1.0;
  std::vector<double> values_;
  std::vector<double> slopes_;
};

}  // namespace

double smooth_step(double s) { return StepTable::instance().value(s); }
double smooth_step_derivative(double s) { return StepTable::instance().derivative(s); }
double smooth_step_second_derivative(double s) { return StepTable::instance().second_derivative(s); }

Cutoff::Cutoff(int k, int d) : k_(k), d_(d) {
  if (k < 1) throw std::invalid_argument("Cutoff: k must be positive");
  if (d < 1) throw std::invalid_argument("Cutoff: dimension must be positive");
}

double Cutoff::eval(std::span<const double> y) const {
  const double r = norm(y);
  if (r < k_) return 1.0;
  return smooth_step(r + 1.0 - k_);
}

void Cutoff::gradient(std::span<const double> y, std::span<double> out) const {
  const double r = norm(y);
  const double g = r <= k_ ? 0.0 : smooth_step_derivative(r + 1.0 - k_) / r;
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = g * y[i];
}

double Cutoff::laplacian(std::span<const double> y) const {
  const double r = norm(y);
  if (r <= k_) return 0.0;
  const double s = r + 1.0 - k_;
  return smooth_step_second_derivative(s) + (d_ - 1.0) * smooth_step_derivative(s) / r;
}

DerivativeBounds Cutoff::bounds() const {
  static std::mutex mutex;
  static std::map<int, DerivativeBounds> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(d_); it != cache.end()) return it->second;
  constexpr int kSamples = 200000;
  DerivativeBounds b{0.0, 0.0};
  for (int i = 0; i <= kSamples; ++i) {
    const double s = 1.0 + static_cast<double>(i) / kSamples;
    const double d1 = std::abs(smooth_step_derivative(s));
    const double d2 = std::abs(smooth_step_second_derivative(s));
    b.alpha = std::max(b.alpha, d1);
    // |y| >= k >= 1 on the transition annulus, so (d-1)/|y| <= d-1.
    b.beta = std::max(b.beta, d2 + (d_ - 1.0) * d1);
  }
  cache.emplace(d_, b);
  return b;
}

double cutoff_eval(const Cutoff& cut, std::span<const double> y) { return cut.eval(y); }
DerivativeBounds cutoff_derivative_bounds(const Cutoff& cut) { return cut.bounds(); }

// ---------------------------------------------------------------------------
// Kato estimate
// ---------------------------------------------------------------------------

double bessel_potential_kernel(int d, double lambda, double r) {
  if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
  const double sl = std::sqrt(lambda);
  const double rho = sl * r;
  const double nu = 0.5 * (d - 1);
  const double g = 2.0 * std::pow(0.5 * rho, -nu) * std::cyl_bessel_k(nu, rho) /
                   (std::pow(4.0 * kPi, 0.5 * d) * std::sqrt(kPi));
  return std::pow(lambda, nu) * g;
}

KatoEstimate kato_norm_estimate(const DriftField& field, double lambda, double half_width,
                                int resolution) {
  if (resolution < 8) throw QuadratureFailure("kato_norm_estimate: resolution below 8 cells");
  if (!(lambda > 0.0) || !(half_width > 0.0)) throw std::invalid_argument("kato_norm_estimate");
  const int d = field.dimension();
  const int m = resolution;
  const int m2 = 2 * m;
  const double h = 2.0 * half_width / m;
  const double cell = std::pow(h, d);

  std::size_t padded = 1;
  for (int i = 0; i < d; ++i) padded *= static_cast<std::size_t>(m2);

  // |b| at cell centres, zero-padded into a (2m)^d array.
  std::vector<fft::cplx> mag(padded, 0.0);
  std::vector<fft::cplx> ker(padded, 0.0);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Vec x(static_cast<std::size_t>(d));
  Vec v(static_cast<std::size_t>(d));
  double sup_b = 0.0;

  const double ball_radius = h * std::pow(std::tgamma(0.5 * d + 1.0) / std::pow(kPi, 0.5 * d), 1.0 / d);
  const double diag = sphere_area(d) / cell *
                      integrate([&](double r) { return bessel_potential_kernel(d, lambda, r) * std::pow(r, d - 1); },
                                0.0, ball_radius, 1e-12, "kato diagonal cell");

  for (std::size_t flat = 0; flat < padded; ++flat) {
    bool inside = true;
    bool valid_offset = true;  // index m would be a displacement of +-m cells, never needed
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const int i = idx[static_cast<std::size_t>(k)];
      if (i >= m) inside = false;
      if (i == m) valid_offset = false;
      const int off = i < m ? i : i - m2;
      r2 += (off * h) * (off * h);
      if (inside) x[static_cast<std::size_t>(k)] = -half_width + (i + 0.5) * h;
    }
    if (inside) {
      double cap = std::numeric_limits<double>::infinity();
      bool singular_cell = false;
      for (const auto& p : field.singular_points()) {
        double dist2 = 0.0;
        for (int k = 0; k < d; ++k) dist2 += (x[k] - p[k]) * (x[k] - p[k]);
        if (dist2 < 0.25 * h * h) {
          cap = 1.0 / h;
          if (dist2 == 0.0) singular_cell = true;
        }
      }
      double b = cap;
      if (!singular_cell) {
        field.eval_unchecked(x, v);
        b = std::min(norm(v), cap);
      }
      mag[flat] = b;
      sup_b = std::max(sup_b, b);
    }
    if (!valid_offset) {
      ker[flat] = 0.0;
    } else if (r2 == 0.0) {
      ker[flat] = diag;
    } else {
      ker[flat] = bessel_potential_kernel(d, lambda, std::sqrt(r2));
    }
    int k = d - 1;
    while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == m2) idx[static_cast<std::size_t>(k--)] = 0;
  }

  KatoEstimate est;
  est.half_width = half_width;
  est.resolution = resolution;
  const double inner_mass =
      sphere_area(d) * integrate([&](double r) { return bessel_potential_kernel(d, lambda, r) * std::pow(r, d - 1); },
                                 0.0, half_width, 1e-12, "kato tail");
  est.kernel_tail_mass = std::max(0.0, 1.0 / std::sqrt(lambda) - inner_mass);
  if (sup_b == 0.0) return est;

  fft::forward(mag, d, m2);
  fft::forward(ker, d, m2);
  for (std::size_t i = 0; i < padded; ++i) mag[i] *= ker[i];
  fft::inverse(mag, d, m2);

  std::fill(idx.begin(), idx.end(), 0);
  double best = 0.0;
  for (std::size_t flat = 0; flat < padded; ++flat) {
    bool inside = true;
    for (int k = 0; k < d; ++k) inside = inside && idx[static_cast<std::size_t>(k)] < m;
    if (inside) best = std::max(best, mag[flat].real() * cell);
    int k = d - 1;
    while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == m2) idx[static_cast<std::size_t>(k--)] = 0;
  }
  est.value = best;
  return est;
}

}  // namespace driftlab
