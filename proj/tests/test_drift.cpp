#include <doctest.h>

#include <cmath>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "oracle_values.hpp"

using namespace driftlab;
using doctest::Approx;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("dimensional constants match the extended-precision oracle") {
  CHECK(rel(m_d_constant(3), oracle::kM3) < 1e-14);
  CHECK(rel(m_d_constant(4), oracle::kM4) < 1e-14);
  CHECK(kappa_d(3) == 1.5);
  CHECK_THROWS_AS(m_d_constant(2), DimensionTooSmall);

  const auto t3 = admissibility_threshold(3);
  CHECK(rel(t3.delta_max, oracle::kDeltaMax3) < 1e-14);
  CHECK(rel(t3.c_max, oracle::kCMax3) < 1e-14);
  const auto t4 = admissibility_threshold(4);
  CHECK(rel(t4.delta_max, oracle::kDeltaMax4) < 1e-14);
  CHECK(rel(t4.c_max, oracle::kCMax4) < 1e-14);
}

TEST_CASE("model certificate") {
  const auto cert = model_certificate(0.2, 3);
  CHECK(cert.delta == Approx(0.16).epsilon(1e-15));
  CHECK(cert.admissible);
  CHECK(cert.class_tag == ClassTag::weak_form_bounded);
  CHECK(cert.threshold_used == admissibility_threshold(3).c_max);
  CHECK(to_csv_row(cert) == "weak_form_bounded,0.2,3,0.16,1,true,0.253166023616");

  CHECK_FALSE(model_certificate(0.26, 3).admissible);
  CHECK_FALSE(model_certificate(3.0, 3).admissible);
  CHECK(model_certificate(0.0, 3).delta == 0.0);
  CHECK_THROWS_AS(model_certificate(0.2, 2), DimensionTooSmall);

  // Squared reading: 4 c^2 m_3 < 1 in d = 3.
  CHECK(rel(c_max_squared_reading(3), 0.5 / std::sqrt(oracle::kM3)) < 1e-14);
  const auto fb = form_bounded_certificate(0.2, 3);
  CHECK(fb.class_tag == ClassTag::form_bounded);
  CHECK(fb.delta == Approx(0.16));
  CHECK(fb.admissible);
}

TEST_CASE("drift fields evaluate and reject singular points") {
  const auto b = DriftField::model_radial(0.2, 3);
  const std::vector<double> x{0.5, 0.0, 0.0};
  const auto v = eval_drift(b, x);
  CHECK(v[0] == Approx(0.4));
  CHECK(v[1] == 0.0);
  const std::vector<double> origin{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(eval_drift(b, origin), SingularPoint);
  CHECK(b.model_c() == 0.2);

  const auto s = DriftField::bounded_smooth({1.0, 0.0, 0.0}, 0.0);
  CHECK(eval_drift(s, origin)[0] == 1.0);
}

TEST_CASE("mollifier normalization and profile match direct quadrature") {
  CHECK(rel(mollifier_normalization(3), oracle::kNormalization3) < 1e-9);
  CHECK(rel(mollifier_normalization(4), oracle::kNormalization4) < 1e-9);
  CHECK(default_epsilon(8) == Approx(1.0 / 9.0));

  const double e8 = default_epsilon(8);
  CHECK(rel(mollified_radial_profile(0.2, 3, 8, e8, 0.05), oracle::kProfileC02N8_0_05) < 1e-8);
  CHECK(rel(mollified_radial_profile(0.2, 3, 8, e8, 0.2), oracle::kProfileC02N8_0_2) < 1e-8);
  CHECK(rel(mollified_radial_profile(0.2, 3, 8, e8, 0.5), oracle::kProfileC02N8_0_5) < 1e-8);
  CHECK(rel(mollified_radial_profile(0.2, 3, 8, e8, 1.0), oracle::kProfileC02N8_1_0) < 1e-8);
  const double e4 = default_epsilon(4);
  CHECK(rel(mollified_radial_profile(4.0, 3, 4, e4, 0.9), oracle::kProfileC4N4_0_9) < 1e-8);
  CHECK(rel(mollified_radial_profile(4.0, 3, 4, e4, 1.2), oracle::kProfileC4N4_1_2) < 1e-8);
  CHECK(rel(mollified_radial_profile(4.0, 3, 4, e4, 3.0), oracle::kProfileC4N4_3_0) < 1e-8);
}

TEST_CASE("mollified drift: support, bound, radial symmetry") {
  const MollifiedDrift m(DriftField::model_radial(0.2, 3), 8);
  CHECK(m.sup_bound() <= 8.0);
  CHECK(m.deviation_radius() == Approx(0.2 / 8 + 1.0 / 9));

  std::vector<double> b(3);
  const std::vector<double> far{9.2, 0.0, 0.0};
  m.eval_into(far, b);
  CHECK(b[0] == 0.0);

  // b_n(x) = phi(|x|) x/|x|.
  const std::vector<double> x{0.0, 0.0, 1.0};
  m.eval_into(x, b);
  CHECK(b[2] == Approx(oracle::kProfileC02N8_1_0).epsilon(1e-8));
  const std::vector<double> y{0.6, 0.0, 0.8};
  m.eval_into(y, b);
  CHECK(b[0] == Approx(0.6 * oracle::kProfileC02N8_1_0).epsilon(1e-8));
  CHECK(b[1] == 0.0);

  const std::vector<double> origin{0.0, 0.0, 0.0};
  m.eval_into(origin, b);
  CHECK(b[0] == 0.0);

  // c = n^2 leaves the truncation shell empty.
  const MollifiedDrift empty(DriftField::model_radial(4.0, 3), 2);
  const std::vector<double> z{2.0, 0.0, 0.0};
  empty.eval_into(z, b);
  CHECK(b[0] == 0.0);
  CHECK(MollifiedDrift(DriftField::model_radial(0.0, 3), 4).deviation_radius() == 0.0);
}

TEST_CASE("generic cubature agrees with the radial table") {
  const auto model = DriftField::model_radial(0.2, 3);
  const auto as_custom = DriftField::custom(
      3,
      [](std::span<const double> x, std::span<double> out) {
        const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        for (int i = 0; i < 3; ++i) out[i] = 0.2 * x[i] / r2;
      },
      {{0.0, 0.0, 0.0}}, "radial_copy");
  const MollifiedDrift a(model, 4);
  const MollifiedDrift b(as_custom, 4, default_epsilon(4), 10);
  const std::vector<double> x{0.3, -0.4, 0.5};
  const auto va = a.eval(x);
  const auto vb = b.eval(x);
  for (int i = 0; i < 3; ++i) CHECK(vb[i] == Approx(va[i]).epsilon(1e-4));
}

TEST_CASE("drift descriptors round-trip") {
  const MollifiedDrift m(DriftField::model_radial(0.2, 3), 8);
  const MollifiedDrift back = parse_drift_descriptor(m.descriptor());
  CHECK(back.n() == 8);
  CHECK(back.epsilon() == m.epsilon());
  CHECK(back.base().model_c() == 0.2);
  const MollifiedDrift eps = parse_drift_descriptor("kind=model_radial c=0.5 d=4 n=3 epsilon=0.2");
  CHECK(eps.dimension() == 4);
  CHECK(eps.epsilon() == 0.2);
}

TEST_CASE("cutoffs") {
  CHECK(smooth_step(0.5) == 1.0);
  CHECK(smooth_step(2.5) == 0.0);
  CHECK(smooth_step(1.5) == Approx(0.5).epsilon(1e-12));
  CHECK(rel(smooth_step(1.25), oracle::kSmoothStep_1_25) < 1e-10);
  CHECK(rel(smooth_step(1.7), oracle::kSmoothStep_1_7) < 1e-10);

  const Cutoff xi(3, 3);
  const std::vector<double> inside{1.0, 1.0, 1.0};
  const std::vector<double> outside{3.0, 3.0, 3.0};
  CHECK(cutoff_eval(xi, inside) == 1.0);
  CHECK(cutoff_eval(xi, outside) == 0.0);

  // Bounds do not depend on k.
  const auto b3 = cutoff_derivative_bounds(xi);
  const auto b9 = cutoff_derivative_bounds(Cutoff(9, 3));
  CHECK(b3.alpha == b9.alpha);
  CHECK(b3.beta == b9.beta);

  // Gradient against central differences.
  const std::vector<double> y{2.3, 0.4, -0.2};
  std::vector<double> g(3);
  xi.gradient(y, g);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    auto yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    CHECK(g[i] == Approx((xi.eval(yp) - xi.eval(ym)) / (2 * h)).epsilon(1e-6));
  }
  double lap = 0.0;
  for (int i = 0; i < 3; ++i) {
    auto yp = y, ym = y;
    yp[i] += 1e-4;
    ym[i] -= 1e-4;
    lap += (xi.eval(yp) - 2 * xi.eval(y) + xi.eval(ym)) / 1e-8;
  }
  CHECK(xi.laplacian(y) == Approx(lap).epsilon(1e-4));
}

TEST_CASE("Bessel potential kernel and the Kato baseline") {
  CHECK(rel(bessel_potential_kernel(3, 1.0, 0.5), oracle::kBesselKernel3_1_0_5) < 1e-12);
  CHECK(rel(bessel_potential_kernel(4, 2.0, 1.0), oracle::kBesselKernel4_2_1_0) < 1e-12);

  const auto k = kato_norm_estimate(DriftField::model_radial(0.2, 3), 1.0, 4.0, 32);
  CHECK(k.value == Approx(0.315434151729).epsilon(1e-9));
  CHECK(k.kernel_tail_mass == Approx(0.0348775).epsilon(1e-4));
  CHECK_THROWS_AS(kato_norm_estimate(DriftField::model_radial(0.2, 3), 1.0, 4.0, 4), QuadratureFailure);
}
