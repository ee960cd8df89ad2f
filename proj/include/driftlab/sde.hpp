#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct SimulationOptions {
  /// Record every stride-th step (the final time is always a multiple).
  std::size_t snapshot_stride = 1;
  /// Freeze a path once |X| <= stop_radius; zero disables stopping.
  double stop_radius = 0.0;
};

/// Throws StepTooLarge unless dt * sup|b_n| <= 0.1 * epsilon_n: one drift step
/// moves a path by at most a tenth of the length on which b_n varies.
void check_step_size(const MollifiedDrift& field, double dt);

/// Euler-Maruyama paths of X = x0 - int b_n(X) ds + sqrt(2) W. Path i draws
/// its normals from GaussianStream(path_seed(master_seed, i)) alone.
class PathEnsemble {
 public:
  using Visitor = std::function<void(long step, std::span<const double> x)>;

  const MollifiedDrift& field() const noexcept { return field_; }
  int dimension() const noexcept { return field_.dimension(); }
  const Vec& x0() const noexcept { return x0_; }
  double dt() const noexcept { return dt_; }
  double t_end() const noexcept { return t_end_; }
  std::size_t paths() const noexcept { return N_; }
  std::uint64_t master_seed() const noexcept { return seed_; }
  long steps() const noexcept { return steps_; }
  const SimulationOptions& options() const noexcept { return opt_; }

  std::size_t snapshot_count() const noexcept { return snapshots_; }
  double snapshot_time(std::size_t k) const noexcept;
  /// Index of the snapshot at time t; throws std::invalid_argument off the snapshot grid.
  std::size_t snapshot_index(double t) const;
  std::span<const double> state(std::size_t path, std::size_t k) const;

  /// Step at which the path was frozen, or -1.
  long stop_step(std::size_t path) const { return stop_step_[path]; }
  double stopped_fraction() const;
  /// sup_{s <= t_end} |X_s| over the full-resolution path.
  double sup_norm(std::size_t path) const { return sup_norm_[path]; }
  /// int_0^{t_end} |b_n(X_s)| ds by the trapezoid rule (zero after stopping).
  double drift_integral(std::size_t path) const { return drift_integral_[path]; }
  /// max_k |X_{k+1} - X_k|.
  double max_increment(std::size_t path) const { return max_increment_[path]; }

  /// Regenerates path i at full resolution, visiting X_0, ..., X_steps.
  void replay(std::size_t path, const Visitor& visit) const;

 private:
  friend PathEnsemble simulate(const MollifiedDrift&, Vec, double, double, std::size_t, std::uint64_t,
                               SimulationOptions);
  PathEnsemble(MollifiedDrift field, Vec x0, double dt, double t_end, std::size_t N, std::uint64_t seed,
               SimulationOptions opt);

  /// Runs path i, calling visit at every step; returns its summary.
  struct Summary {
    long stop_step = -1;
    double sup_norm = 0.0;
    double drift_integral = 0.0;
    double max_increment = 0.0;
  };
  Summary run(std::size_t path, const Visitor& visit) const;

  MollifiedDrift field_;
  Vec x0_;
  double dt_;
  double t_end_;
  std::size_t N_;
  std::uint64_t seed_;
  SimulationOptions opt_;
  long steps_ = 0;
  std::size_t snapshots_ = 0;
  std::vector<double> states_;  // [path][snapshot][coordinate]
  std::vector<long> stop_step_;
  std::vector<double> sup_norm_;
  std::vector<double> drift_integral_;
  std::vector<double> max_increment_;
};

/// t_end must be an integer multiple of dt (to 1e-9 relative).
PathEnsemble simulate(const MollifiedDrift& field, Vec x0, double dt, double t_end, std::size_t N,
                      std::uint64_t master_seed, SimulationOptions options = {});

using Observable = std::function<double(std::span<const double>)>;

/// Mean and 99% radius of f(X_t) over paths; t must be a snapshot time.
MeanCi expectation(const PathEnsemble& ens, const Observable& f, double t);

/// Flat binary dump: three little-endian int64 (d, N, steps) followed by
/// N * (steps + 1) * d doubles, path-major, then time, then coordinate. Here
/// "steps" counts recorded intervals, so rows per path = snapshot_count().
void write_paths_binary(const PathEnsemble& ens, const std::string& file);

// ---------------------------------------------------------------------------
// Martingale problem
// ---------------------------------------------------------------------------

struct TestFunction {
  std::string label;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<double(std::span<const double>)> laplacian;

  static TestFunction coordinate(int i);
  static TestFunction product(int i, int j);
  /// |y|^2, whose correction term -Delta f = -2d is constant.
  static TestFunction squared_norm();
  /// xi_k(y) (1 + y_1 + y_1 y_2): compactly supported and smooth.
  static TestFunction cutoff_polynomial(int k, int d);
};

struct Window {
  double s = 0.0;
  double t = 0.0;
};

struct WindowResult {
  double s = 0.0;
  double t = 0.0;
  double mean = 0.0;
  double ci = 0.0;
  bool pass = false;
};

struct MartingaleReport {
  std::string test_function;
  std::vector<WindowResult> windows;
  bool pass = false;  // |mean| <= 3 ci in every window
};

/// M(t) = f(X_t) - f(x0) + int_0^t (-Delta f + b_n.grad f)(X_s) ds per path,
/// trapezoidal in s at full resolution; tests M(t) - M(s) for zero mean.
MartingaleReport martingale_test(const PathEnsemble& ens, const TestFunction& f, const std::vector<Window>& windows);

// ---------------------------------------------------------------------------
// Experiments on the model drift
// ---------------------------------------------------------------------------

struct SlopeResult {
  double c = 0.0;
  int d = 3;
  int n = 0;
  double dt = 0.0;
  std::size_t N = 0;
  double t_max = 0.0;
  double stop_radius = 0.0;
  double slope = 0.0;
  double ci = 0.0;
  double expected = 0.0;  // 2(d - c)
  double stopped_fraction = 0.0;
  bool insufficient_survival = false;  // more than half the paths stopped
  std::size_t fit_points = 0;
};

/// Paths stop at |X| <= c/n + epsilon_n, where b_n departs from c x/|x|^2.
/// With s_k = mean(t_k ^ tau) and y_k = mean |X_{t_k ^ tau}|^2, the slope is
/// the least-squares slope of y against s. Its radius comes from the
/// linearized per-path residuals sum_k a_k (|X_k|^2 - slope (t_k ^ tau)).
SlopeResult radial_slope_experiment(double c, int d, const Vec& x0, int n, double dt, std::size_t N, double t_max,
                                    std::uint64_t seed, std::size_t fit_points = 50);

struct CollapseRow {
  int n = 0;
  double mean_sq = 0.0;  // mean |X_t|^2
  double ci = 0.0;
};

struct CollapseResult {
  double c = 0.0;
  int d = 3;
  double t = 0.0;
  double dt = 0.0;
  std::size_t N = 0;
  std::vector<CollapseRow> rows;
  bool nonincreasing = false;  // each mean no larger than the previous one
};

/// Starts at the origin; level n uses master seed seed + n. Any c >= 0 is
/// accepted so that the c = 0 control runs through the same code.
CollapseResult collapse_experiment(double c, int d, const std::vector<int>& n_list, double dt, std::size_t N,
                                   double t, std::uint64_t seed);

struct ExceedanceRow {
  double R = 0.0;
  double probability = 0.0;
  double ci = 0.0;
};

/// P[sup_{s <= t_end} |X_s| > R] for each R.
std::vector<ExceedanceRow> explosion_check(const PathEnsemble& ens, const std::vector<double>& radii);

/// For X = sqrt(2) W from the origin: P[|X_t| > R] <= P[sup |X_s| > R] <= 2 P[|X_t| > R].
std::pair<double, double> brownian_exceedance_bounds(int d, double t, double R);

struct LadderLevel {
  double dt_fine = 0.0;
  double diff = 0.0;  // E f(X^{dt_fine}) - E f(X^{2 dt_fine}) on shared increments
  double ci = 0.0;
  double mean_fine = 0.0;
};

/// Coupled dt-halving ladder from dt0 down to dt0 / 2^levels. For a first
/// order scheme successive diffs halve.
std::vector<LadderLevel> weak_error_ladder(const MollifiedDrift& field, const Vec& x0, const Observable& f, double t,
                                           double dt0, int levels, std::size_t N, std::uint64_t seed);

struct DriftGapRow {
  int n = 0;
  int m = 0;
  double mean_gap = 0.0;  // mean |b_n(X_t) - b_m(X_t)|
  double ci = 0.0;
};

/// Consecutive pairs of n_list evaluated on the ensemble's states at time t.
std::vector<DriftGapRow> drift_path_convergence(const PathEnsemble& ens, const std::vector<int>& n_list, double t);

/// max over paths of the largest single-step displacement, over sqrt(dt log N).
double continuity_modulus_ratio(const PathEnsemble& ens);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSdeCsvHeader = "experiment,c,d,n,dt,N,statistic,value,ci";

struct SdeRow {
  std::string experiment;
  double c = 0.0;
  int d = 3;
  int n = 0;
  double dt = 0.0;
  std::size_t N = 0;
  std::string statistic;
  double value = 0.0;
  double ci = 0.0;
};

std::string to_csv_row(const SdeRow& row);

}  // namespace driftlab
