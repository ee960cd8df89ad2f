#pragma once

#include <cstddef>
#include <span>

namespace driftlab {

/// Sample mean with a two-sided 99% confidence radius.
struct MeanCi {
  double mean = 0.0;
  double ci = 0.0;
  std::size_t n = 0;
};

/// Student t_{n-1} quantile below 10^4 samples, the normal quantile above.
double ci99_quantile(std::size_t n);

/// Index-ordered sums; a constant sample has ci exactly 0.
MeanCi mean_ci(std::span<const double> xs);

double sample_variance(std::span<const double> xs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

}  // namespace driftlab
