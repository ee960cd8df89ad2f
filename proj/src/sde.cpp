#include "driftlab/sde.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "driftlab/errors.hpp"
#include "driftlab/format.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {
namespace {

constexpr int kMaxDim = 16;

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

/// round(t/dt) when t is an integer multiple of dt to 1e-9 relative.
long steps_for(double t, double dt, const char* what) {
  const double ratio = t / dt;
  const double k = std::round(ratio);
  if (std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument(std::string(what) + ": time is not a multiple of dt");
  }
  return static_cast<long>(k);
}

}  // namespace

void check_step_size(const MollifiedDrift& field, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const double budget = 0.1 * field.epsilon();
  if (dt * field.sup_bound() > budget) {
    throw StepTooLarge("dt * sup|b_n| = " + format_double(dt * field.sup_bound()) + " exceeds 0.1 * epsilon_n = " +
                       format_double(budget));
  }
}

// ---------------------------------------------------------------------------
// PathEnsemble
// ---------------------------------------------------------------------------

PathEnsemble::PathEnsemble(MollifiedDrift field, Vec x0, double dt, double t_end, std::size_t N, std::uint64_t seed,
                           SimulationOptions opt)
    : field_(std::move(field)), x0_(std::move(x0)), dt_(dt), t_end_(t_end), N_(N), seed_(seed), opt_(opt) {}

double PathEnsemble::snapshot_time(std::size_t k) const noexcept {
  return static_cast<double>(k * opt_.snapshot_stride) * dt_;
}

std::size_t PathEnsemble::snapshot_index(double t) const {
  const long step = steps_for(t, dt_, "snapshot_index");
  if (step < 0 || step > steps_ || step % static_cast<long>(opt_.snapshot_stride) != 0) {
    throw std::invalid_argument("snapshot_index: t = " + format_double(t) + " is not a recorded time");
  }
  return static_cast<std::size_t>(step) / opt_.snapshot_stride;
}

std::span<const double> PathEnsemble::state(std::size_t path, std::size_t k) const {
  const auto d = static_cast<std::size_t>(dimension());
  return std::span<const double>(states_).subspan((path * snapshots_ + k) * d, d);
}

double PathEnsemble::stopped_fraction() const {
  std::size_t stopped = 0;
  for (long s : stop_step_) stopped += s >= 0 ? 1 : 0;
  return N_ ? static_cast<double>(stopped) / static_cast<double>(N_) : 0.0;
}

PathEnsemble::Summary PathEnsemble::run(std::size_t path, const Visitor& visit) const {
  const int d = dimension();
  GaussianStream rng(path_seed(seed_, path));
  double x[kMaxDim], b[kMaxDim];
  std::copy(x0_.begin(), x0_.end(), x);
  const std::span<const double> xs(x, static_cast<std::size_t>(d));
  const std::span<double> bs(b, static_cast<std::size_t>(d));
  const double noise = std::sqrt(2.0 * dt_);

  Summary s;
  double r = norm(xs);
  s.sup_norm = r;
  bool stopped = opt_.stop_radius > 0.0 && r <= opt_.stop_radius;
  if (stopped) s.stop_step = 0;
  field_.eval_into(xs, bs);
  double b_prev = norm(std::span<const double>(b, static_cast<std::size_t>(d)));
  visit(0, xs);

  for (long k = 0; k < steps_; ++k) {
    if (!stopped) {
      double inc2 = 0.0;
      for (int i = 0; i < d; ++i) {
        const double dx = -b[i] * dt_ + noise * rng.next();
        x[i] += dx;
        inc2 += dx * dx;
      }
      s.max_increment = std::max(s.max_increment, std::sqrt(inc2));
      r = norm(xs);
      s.sup_norm = std::max(s.sup_norm, r);
      field_.eval_into(xs, bs);
      const double b_now = norm(std::span<const double>(b, static_cast<std::size_t>(d)));
      s.drift_integral += 0.5 * dt_ * (b_prev + b_now);
      b_prev = b_now;
      if (opt_.stop_radius > 0.0 && r <= opt_.stop_radius) {
        stopped = true;
        s.stop_step = k + 1;
      }
    }
    visit(k + 1, xs);
  }
  return s;
}

void PathEnsemble::replay(std::size_t path, const Visitor& visit) const {
  if (path >= N_) throw std::out_of_range("replay: path index");
  run(path, visit);
}

PathEnsemble simulate(const MollifiedDrift& field, Vec x0, double dt, double t_end, std::size_t N,
                      std::uint64_t master_seed, SimulationOptions options) {
  const int d = field.dimension();
  if (static_cast<int>(x0.size()) != d) throw std::invalid_argument("simulate: x0 has the wrong dimension");
  if (d > kMaxDim) throw std::invalid_argument("simulate: dimension above 16 unsupported");
  if (N == 0) throw std::invalid_argument("simulate: need at least one path");
  if (options.snapshot_stride == 0) throw std::invalid_argument("simulate: snapshot stride must be positive");
  check_step_size(field, dt);
  const long steps = steps_for(t_end, dt, "simulate");
  if (steps % static_cast<long>(options.snapshot_stride) != 0) {
    throw std::invalid_argument("simulate: snapshot stride must divide the step count");
  }

  PathEnsemble ens(field, std::move(x0), dt, t_end, N, master_seed, options);
  ens.steps_ = steps;
  ens.snapshots_ = static_cast<std::size_t>(steps) / options.snapshot_stride + 1;
  const auto du = static_cast<std::size_t>(d);
  ens.states_.assign(N * ens.snapshots_ * du, 0.0);
  ens.stop_step_.assign(N, -1);
  ens.sup_norm_.assign(N, 0.0);
  ens.drift_integral_.assign(N, 0.0);
  ens.max_increment_.assign(N, 0.0);

  const auto stride = static_cast<long>(options.snapshot_stride);
  for (std::size_t i = 0; i < N; ++i) {
    double* row = ens.states_.data() + i * ens.snapshots_ * du;
    const auto summary = ens.run(i, [&](long k, std::span<const double> x) {
      if (k % stride == 0) std::copy(x.begin(), x.end(), row + static_cast<std::size_t>(k / stride) * du);
    });
    ens.stop_step_[i] = summary.stop_step;
    ens.sup_norm_[i] = summary.sup_norm;
    ens.drift_integral_[i] = summary.drift_integral;
    ens.max_increment_[i] = summary.max_increment;
  }
  return ens;
}

MeanCi expectation(const PathEnsemble& ens, const Observable& f, double t) {
  const std::size_t k = ens.snapshot_index(t);
  std::vector<double> v(ens.paths());
  for (std::size_t i = 0; i < ens.paths(); ++i) v[i] = f(ens.state(i, k));
  return mean_ci(v);
}

void write_paths_binary(const PathEnsemble& ens, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("write_paths_binary: cannot open " + file);
  const std::int64_t header[3] = {ens.dimension(), static_cast<std::int64_t>(ens.paths()),
                                  static_cast<std::int64_t>(ens.snapshot_count()) - 1};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  for (std::size_t i = 0; i < ens.paths(); ++i) {
    for (std::size_t k = 0; k < ens.snapshot_count(); ++k) {
      const auto s = ens.state(i, k);
      out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("write_paths_binary: write failed for " + file);
}

// ---------------------------------------------------------------------------
// Martingale problem
// ---------------------------------------------------------------------------

TestFunction TestFunction::coordinate(int i) {
  TestFunction f;
  f.label = "y" + std::to_string(i + 1);
  f.value = [i](std::span<const double> y) { return y[i]; };
  f.gradient = [i](std::span<const double> y, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[i] = 1.0;
    (void)y;
  };
  f.laplacian = [](std::span<const double>) { return 0.0; };
  return f;
}

TestFunction TestFunction::product(int i, int j) {
  if (i == j) throw std::invalid_argument("TestFunction::product: use distinct coordinates");
  TestFunction f;
  f.label = "y" + std::to_string(i + 1) + "y" + std::to_string(j + 1);
  f.value = [i, j](std::span<const double> y) { return y[i] * y[j]; };
  f.gradient = [i, j](std::span<const double> y, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[i] = y[j];
    g[j] = y[i];
  };
  f.laplacian = [](std::span<const double>) { return 0.0; };
  return f;
}

TestFunction TestFunction::squared_norm() {
  TestFunction f;
  f.label = "norm2";
  f.value = [](std::span<const double> y) {
    double s = 0.0;
    for (double v : y) s += v * v;
    return s;
  };
  f.gradient = [](std::span<const double> y, std::span<double> g) {
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = 2.0 * y[i];
  };
  f.laplacian = [](std::span<const double> y) { return 2.0 * static_cast<double>(y.size()); };
  return f;
}

TestFunction TestFunction::cutoff_polynomial(int k, int d) {
  const Cutoff cut(k, d);
  TestFunction f;
  f.label = "cutoff" + std::to_string(k) + "_poly";
  auto poly = [](std::span<const double> y) { return 1.0 + y[0] + y[0] * y[1]; };
  f.value = [cut, poly](std::span<const double> y) { return cut.eval(y) * poly(y); };
  f.gradient = [cut, poly](std::span<const double> y, std::span<double> g) {
    double gc[kMaxDim];
    cut.gradient(y, std::span<double>(gc, y.size()));
    const double xi = cut.eval(y);
    const double p = poly(y);
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = gc[i] * p;
    g[0] += xi * (1.0 + y[1]);
    g[1] += xi * y[0];
  };
  f.laplacian = [cut, poly](std::span<const double> y) {
    double gc[kMaxDim];
    cut.gradient(y, std::span<double>(gc, y.size()));
    // Delta(xi p) = p Delta xi + 2 grad xi . grad p, and Delta p = 0
    return poly(y) * cut.laplacian(y) + 2.0 * (gc[0] * (1.0 + y[1]) + gc[1] * y[0]);
  };
  return f;
}

MartingaleReport martingale_test(const PathEnsemble& ens, const TestFunction& f, const std::vector<Window>& windows) {
  const int d = ens.dimension();
  const double dt = ens.dt();
  std::vector<long> marks;
  for (const auto& w : windows) {
    if (!(0.0 <= w.s && w.s < w.t && w.t <= ens.t_end() * (1.0 + 1e-12))) {
      throw std::invalid_argument("martingale_test: windows need 0 <= s < t <= t_end");
    }
    marks.push_back(steps_for(w.s, dt, "martingale_test"));
    marks.push_back(steps_for(w.t, dt, "martingale_test"));
  }

  std::vector<std::vector<double>> increments(windows.size(), std::vector<double>(ens.paths()));
  std::vector<double> M_at(marks.size());
  double b[kMaxDim], g[kMaxDim];
  for (std::size_t i = 0; i < ens.paths(); ++i) {
    const long stop = ens.stop_step(i);
    double f0 = 0.0, integral = 0.0, prev = 0.0;
    ens.replay(i, [&](long k, std::span<const double> x) {
      double gen = 0.0;
      if (stop < 0 || k < stop) {
        ens.field().eval_into(x, std::span<double>(b, static_cast<std::size_t>(d)));
        f.gradient(x, std::span<double>(g, static_cast<std::size_t>(d)));
        gen = -f.laplacian(x);
        for (int a = 0; a < d; ++a) gen += b[a] * g[a];
      }
      if (k == 0) {
        f0 = f.value(x);
      } else {
        integral += 0.5 * dt * (prev + gen);
      }
      prev = gen;
      const double M = f.value(x) - f0 + integral;
      for (std::size_t j = 0; j < marks.size(); ++j) {
        if (marks[j] == k) M_at[j] = M;
      }
    });
    for (std::size_t w = 0; w < windows.size(); ++w) increments[w][i] = M_at[2 * w + 1] - M_at[2 * w];
  }

  MartingaleReport report;
  report.test_function = f.label;
  report.pass = true;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const MeanCi mc = mean_ci(increments[w]);
    WindowResult r{windows[w].s, windows[w].t, mc.mean, mc.ci, std::abs(mc.mean) <= 3.0 * mc.ci};
    report.pass = report.pass && r.pass;
    report.windows.push_back(r);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

SlopeResult radial_slope_experiment(double c, int d, const Vec& x0, int n, double dt, std::size_t N, double t_max,
                                    std::uint64_t seed, std::size_t fit_points) {
  if (norm(x0) == 0.0) throw std::invalid_argument("radial_slope_experiment: x0 must be nonzero");
  if (fit_points < 2) throw std::invalid_argument("radial_slope_experiment: need at least two fit points");
  const MollifiedDrift field(DriftField::model_radial(c, d), n);
  const long steps = steps_for(t_max, dt, "radial_slope_experiment");
  // Largest stride dividing the step count with at least fit_points intervals.
  long stride = std::max(1L, steps / static_cast<long>(fit_points));
  while (steps % stride != 0) --stride;

  SlopeResult out;
  out.c = c;
  out.d = d;
  out.n = n;
  out.dt = dt;
  out.N = N;
  out.t_max = t_max;
  out.expected = 2.0 * (d - c);
  out.stop_radius = field.deviation_radius();

  const PathEnsemble ens = simulate(field, x0, dt, t_max, N, seed,
                                    SimulationOptions{static_cast<std::size_t>(stride), out.stop_radius});
  const std::size_t K = ens.snapshot_count();
  out.fit_points = K;
  out.stopped_fraction = ens.stopped_fraction();
  out.insufficient_survival = out.stopped_fraction > 0.5;

  std::vector<double> s_bar(K, 0.0), y_bar(K, 0.0);
  auto lived = [&](std::size_t i, std::size_t k) {
    const double t = ens.snapshot_time(k);
    const long st = ens.stop_step(i);
    return st >= 0 ? std::min(t, static_cast<double>(st) * dt) : t;
  };
  auto sq = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      s_bar[k] += lived(i, k);
      y_bar[k] += sq(ens.state(i, k));
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    s_bar[k] /= static_cast<double>(N);
    y_bar[k] /= static_cast<double>(N);
  }
  double s_mean = 0.0;
  for (double s : s_bar) s_mean += s;
  s_mean /= static_cast<double>(K);
  double sxx = 0.0;
  for (double s : s_bar) sxx += (s - s_mean) * (s - s_mean);
  if (sxx == 0.0) throw std::runtime_error("radial_slope_experiment: every path stopped at once");
  std::vector<double> a(K);
  for (std::size_t k = 0; k < K; ++k) a[k] = (s_bar[k] - s_mean) / sxx;
  for (std::size_t k = 0; k < K; ++k) out.slope += a[k] * y_bar[k];

  std::vector<double> resid(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) resid[i] += a[k] * (sq(ens.state(i, k)) - out.slope * lived(i, k));
  }
  out.ci = mean_ci(resid).ci;
  return out;
}

CollapseResult collapse_experiment(double c, int d, const std::vector<int>& n_list, double dt, std::size_t N,
                                   double t, std::uint64_t seed) {
  if (c < 0.0) throw std::invalid_argument("collapse_experiment: c must be nonnegative");
  CollapseResult out;
  out.c = c;
  out.d = d;
  out.t = t;
  out.dt = dt;
  out.N = N;
  const long steps = steps_for(t, dt, "collapse_experiment");
  for (int n : n_list) {
    const MollifiedDrift field(DriftField::model_radial(c, d), n);
    const PathEnsemble ens = simulate(field, Vec(static_cast<std::size_t>(d), 0.0), dt, t, N,
                                      seed + static_cast<std::uint64_t>(n),
                                      SimulationOptions{static_cast<std::size_t>(steps), 0.0});
    const MeanCi m = expectation(
        ens,
        [](std::span<const double> x) {
          double s = 0.0;
          for (double v : x) s += v * v;
          return s;
        },
        t);
    out.rows.push_back(CollapseRow{n, m.mean, m.ci});
  }
  out.nonincreasing = true;
  for (std::size_t k = 1; k < out.rows.size(); ++k) {
    out.nonincreasing = out.nonincreasing && out.rows[k].mean_sq <= out.rows[k - 1].mean_sq;
  }
  return out;
}

std::vector<ExceedanceRow> explosion_check(const PathEnsemble& ens, const std::vector<double>& radii) {
  std::vector<ExceedanceRow> rows;
  std::vector<double> ind(ens.paths());
  for (double R : radii) {
    for (std::size_t i = 0; i < ens.paths(); ++i) ind[i] = ens.sup_norm(i) > R ? 1.0 : 0.0;
    const MeanCi m = mean_ci(ind);
    rows.push_back(ExceedanceRow{R, m.mean, m.ci});
  }
  return rows;
}

std::pair<double, double> brownian_exceedance_bounds(int d, double t, double R) {
  if (!(t > 0.0)) throw std::invalid_argument("brownian_exceedance_bounds: t must be positive");
  if (R <= 0.0) return {1.0, 1.0};
  // |X_t|^2 / (2t) is chi-squared with d degrees of freedom.
  const boost::math::chi_squared chi(static_cast<double>(d));
  const double tail = boost::math::cdf(boost::math::complement(chi, R * R / (2.0 * t)));
  return {tail, std::min(1.0, 2.0 * tail)};
}

std::vector<LadderLevel> weak_error_ladder(const MollifiedDrift& field, const Vec& x0, const Observable& f, double t,
                                           double dt0, int levels, std::size_t N, std::uint64_t seed) {
  const int d = field.dimension();
  if (static_cast<int>(x0.size()) != d) throw std::invalid_argument("weak_error_ladder: x0 dimension");
  check_step_size(field, dt0);
  std::vector<LadderLevel> out;
  double xf[kMaxDim], xc[kMaxDim], b[kMaxDim];
  const std::span<double> bs(b, static_cast<std::size_t>(d));
  for (int l = 1; l <= levels; ++l) {
    const double dtf = dt0 / std::ldexp(1.0, l);
    const double dtc = 2.0 * dtf;
    const long coarse_steps = steps_for(t, dtc, "weak_error_ladder");
    const double sf = std::sqrt(2.0 * dtf);
    std::vector<double> diff(N), fine(N);
    for (std::size_t i = 0; i < N; ++i) {
      GaussianStream rng(path_seed(seed + static_cast<std::uint64_t>(l), i));
      std::copy(x0.begin(), x0.end(), xf);
      std::copy(x0.begin(), x0.end(), xc);
      double z1[kMaxDim], z2[kMaxDim];
      for (long k = 0; k < coarse_steps; ++k) {
        for (int a = 0; a < d; ++a) z1[a] = rng.next();
        for (int a = 0; a < d; ++a) z2[a] = rng.next();
        field.eval_into(std::span<const double>(xf, static_cast<std::size_t>(d)), bs);
        for (int a = 0; a < d; ++a) xf[a] += -b[a] * dtf + sf * z1[a];
        field.eval_into(std::span<const double>(xf, static_cast<std::size_t>(d)), bs);
        for (int a = 0; a < d; ++a) xf[a] += -b[a] * dtf + sf * z2[a];
        field.eval_into(std::span<const double>(xc, static_cast<std::size_t>(d)), bs);
        for (int a = 0; a < d; ++a) xc[a] += -b[a] * dtc + sf * (z1[a] + z2[a]);
      }
      const double ff = f(std::span<const double>(xf, static_cast<std::size_t>(d)));
      fine[i] = ff;
      diff[i] = ff - f(std::span<const double>(xc, static_cast<std::size_t>(d)));
    }
    const MeanCi m = mean_ci(diff);
    out.push_back(LadderLevel{dtf, m.mean, m.ci, mean_ci(fine).mean});
  }
  return out;
}

std::vector<DriftGapRow> drift_path_convergence(const PathEnsemble& ens, const std::vector<int>& n_list, double t) {
  const std::size_t k = ens.snapshot_index(t);
  const int d = ens.dimension();
  std::vector<MollifiedDrift> fields;
  for (int n : n_list) fields.emplace_back(ens.field().base(), n);
  std::vector<DriftGapRow> rows;
  double bn[kMaxDim], bm[kMaxDim];
  std::vector<double> gap(ens.paths());
  for (std::size_t j = 1; j < fields.size(); ++j) {
    for (std::size_t i = 0; i < ens.paths(); ++i) {
      const auto x = ens.state(i, k);
      fields[j - 1].eval_into(x, std::span<double>(bn, static_cast<std::size_t>(d)));
      fields[j].eval_into(x, std::span<double>(bm, static_cast<std::size_t>(d)));
      double s = 0.0;
      for (int a = 0; a < d; ++a) s += (bn[a] - bm[a]) * (bn[a] - bm[a]);
      gap[i] = std::sqrt(s);
    }
    const MeanCi m = mean_ci(gap);
    rows.push_back(DriftGapRow{n_list[j - 1], n_list[j], m.mean, m.ci});
  }
  return rows;
}

double continuity_modulus_ratio(const PathEnsemble& ens) {
  double m = 0.0;
  for (std::size_t i = 0; i < ens.paths(); ++i) m = std::max(m, ens.max_increment(i));
  const double scale = std::sqrt(ens.dt() * std::log(static_cast<double>(std::max<std::size_t>(ens.paths(), 2))));
  return m / scale;
}

std::string to_csv_row(const SdeRow& row) {
  std::ostringstream s;
  s << row.experiment << ',' << format_double(row.c) << ',' << row.d << ',' << row.n << ',' << format_double(row.dt)
    << ',' << row.N << ',' << row.statistic << ',' << format_double(row.value) << ',' << format_double(row.ci);
  return s.str();
}

}  // namespace driftlab
