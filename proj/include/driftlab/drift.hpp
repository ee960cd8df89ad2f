#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace driftlab {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Dimensional constants and admissibility
// ---------------------------------------------------------------------------

/// pi^{1/2} (2e)^{-1/2} d^{d/2} (d-1)^{(1-d)/2}; throws DimensionTooSmall for d < 3.
double m_d_constant(int d);

/// d/(d-1): the resolvent half-plane starts at Re zeta = kappa_d * lambda.
double kappa_d(int d);

struct Thresholds {
  double delta_max;  // 4(d-2) / (m_d (d-1)^2)
  double c_max;      // 2(d-2)^2 / (m_d (d-1)^2)
};

Thresholds admissibility_threshold(int d);

enum class ClassTag { weak_form_bounded, form_bounded, kato };

std::string_view to_string(ClassTag tag);

struct Certificate {
  ClassTag class_tag = ClassTag::weak_form_bounded;
  double c = 0.0;
  int d = 3;
  double delta = 0.0;
  double lambda = 1.0;
  bool admissible = false;
  double threshold_used = 0.0;
  std::string notes;
};

/// Analytic certificate for b(x) = c x/|x|^2. Admissibility is judged against
/// the explicit bound c < 2 m_d^{-1} (d-2)^2 (d-1)^{-2}; the notes carry the
/// alternative reading delta = 4c^2/(d-2)^2 plugged into m_d delta < 4(d-2)/(d-1)^2
/// together with the form-bounded certificate.
Certificate model_certificate(double c, int d);

/// Form-bounded certificate delta_1 = 4c^2/(d-2)^2 with the relaxed
/// constraint delta_1 < min(1, (2/(d-2))^2).
Certificate form_bounded_certificate(double c, int d);

inline constexpr std::string_view kCertificateCsvHeader =
    "class_tag,c,d,delta,lambda,admissible,threshold_used";

std::string to_csv_row(const Certificate& cert);

/// Largest c for which 4c^2/(d-2)^2 still satisfies m_d delta < 4(d-2)/(d-1)^2.
double c_max_squared_reading(int d);

// ---------------------------------------------------------------------------
// Drift fields
// ---------------------------------------------------------------------------

struct ModelRadial {
  double c = 0.0;
};

/// amplitude * exp(-|x|^2 / width^2); width <= 0 means the constant field.
struct BoundedSmooth {
  Vec amplitude;
  double width = 0.0;
};

struct CustomField {
  std::function<void(std::span<const double>, std::span<double>)> eval;
  std::string label;
};

class DriftField {
 public:
  using Kind = std::variant<ModelRadial, BoundedSmooth, CustomField>;

  static DriftField model_radial(double c, int d);
  static DriftField bounded_smooth(Vec amplitude, double width = 0.0);
  static DriftField custom(int d,
                           std::function<void(std::span<const double>, std::span<double>)> eval,
                           std::vector<Vec> singular_points = {},
                           std::string label = "custom");

  int dimension() const noexcept { return d_; }
  const Kind& kind() const noexcept { return kind_; }
  const std::vector<Vec>& singular_points() const noexcept { return singular_; }

  bool is_model_radial() const noexcept { return std::holds_alternative<ModelRadial>(kind_); }
  /// c for model_radial, 0 otherwise.
  double model_c() const noexcept;

  bool is_singular(std::span<const double> x) const;

  /// Evaluates b(x); the caller guarantees x is not a singular point.
  void eval_unchecked(std::span<const double> x, std::span<double> out) const;

  /// key=value descriptor (kind, c, d, ...). Custom fields only carry their label.
  std::string descriptor() const;

 private:
  DriftField(int d, Kind kind, std::vector<Vec> singular);

  int d_;
  Kind kind_;
  std::vector<Vec> singular_;
};

/// b(x); throws SingularPoint on the singular set.
Vec eval_drift(const DriftField& field, std::span<const double> x);

// ---------------------------------------------------------------------------
// Friedrichs mollifier and the regularized drifts b_n
// ---------------------------------------------------------------------------

/// Schedule epsilon_n = 1/(n+1).
double default_epsilon(int n);

/// Unnormalized bump exp(1/(r^2-1)) on |x| < 1, as a function of r^2.
double mollifier_bump(double r2) noexcept;

/// 1 / \int_{R^d} exp(1/(|x|^2-1)) 1_{|x|<1} dx, computed once per dimension by
/// adaptive radial quadrature (relative tolerance 1e-8) and cached.
double mollifier_normalization(int d);

/// Radial component phi(r) of gamma_eps * (1_n b) for b = c x/|x|^2, evaluated
/// at the point r e_1. The angular integral reduces to tabulated bump moments in
/// odd d and uses fixed Gauss-Legendre in even d. b_n(x) = phi(|x|) x/|x|.
double mollified_radial_profile(double c, int d, int n, double epsilon, double r);

class MollifiedDrift {
 public:
  /// b_n = gamma_eps * 1_n b with eps = default_epsilon(n).
  MollifiedDrift(DriftField base, int n);
  MollifiedDrift(DriftField base, int n, double epsilon, int quadrature_order = 8);

  const DriftField& base() const noexcept { return base_; }
  int dimension() const noexcept { return base_.dimension(); }
  int n() const noexcept { return n_; }
  double epsilon() const noexcept { return epsilon_; }
  int quadrature_order() const noexcept { return quadrature_order_; }

  void eval_into(std::span<const double> x, std::span<double> out) const;
  Vec eval(std::span<const double> x) const;

  /// Upper bound on sup |b_n|; never exceeds n.
  double sup_bound() const noexcept { return sup_bound_; }

  /// For the model field: c/n + eps, the radius inside which b_n departs from
  /// gamma_eps * b (truncation shell plus mollifier width). Zero otherwise, and for c = 0.
  double deviation_radius() const noexcept;

  /// Tabulated radial profile (model field only).
  double radial_profile(double r) const;

  std::string descriptor() const;

 private:
  struct RadialTable;
  struct Cubature;

  DriftField base_;
  int n_;
  double epsilon_;
  int quadrature_order_;
  double sup_bound_ = 0.0;
  std::shared_ptr<const RadialTable> table_;
  std::shared_ptr<const Cubature> cubature_;
};

Vec mollified_eval(const MollifiedDrift& m, std::span<const double> x);

/// Parses "kind=model_radial c=0.2 d=3 n=8 epsilon=0.1" (whitespace or newline
/// separated). epsilon is optional and defaults to the schedule.
MollifiedDrift parse_drift_descriptor(std::string_view text);

// ---------------------------------------------------------------------------
// Cutoffs xi_k(y) = upsilon(|y| + 1 - k)
// ---------------------------------------------------------------------------

/// upsilon: 1 on [0,1], 0 on [2,inf), the normalized tail integral of a bump on (1,2).
double smooth_step(double s);
double smooth_step_derivative(double s);
double smooth_step_second_derivative(double s);

struct DerivativeBounds {
  double alpha;  // sup |grad xi_k|
  double beta;   // sup |Laplacian xi_k|
};

class Cutoff {
 public:
  Cutoff(int k, int d);

  int k() const noexcept { return k_; }
  int dimension() const noexcept { return d_; }

  double eval(std::span<const double> y) const;
  void gradient(std::span<const double> y, std::span<double> out) const;
  double laplacian(std::span<const double> y) const;

  /// k-independent bounds: alpha = sup|upsilon'|, beta = sup(|upsilon''| + (d-1)|upsilon'|).
  DerivativeBounds bounds() const;

 private:
  int k_;
  int d_;
};

double cutoff_eval(const Cutoff& cut, std::span<const double> y);
DerivativeBounds cutoff_derivative_bounds(const Cutoff& cut);

// ---------------------------------------------------------------------------
// Kato-class norm estimate
// ---------------------------------------------------------------------------

/// Kernel of (lambda - Delta)^{-1/2} on R^d at distance r > 0 (Bessel-K form).
double bessel_potential_kernel(int d, double lambda, double r);

struct KatoEstimate {
  double value = 0.0;             // sup over cell centres of \int |b| k_lambda(. - y)
  double kernel_tail_mass = 0.0;  // \int_{|z| > half_width} k_lambda, mass the box cannot see
  double half_width = 0.0;
  int resolution = 0;
};

/// Cell-centred quadrature over [-L, L]^d with `resolution` cells per axis.
/// The diagonal cell uses the ball-averaged kernel. Throws QuadratureFailure
/// for resolution < 8.
KatoEstimate kato_norm_estimate(const DriftField& field, double lambda, double half_width,
                                int resolution);

}  // namespace driftlab
