#include "driftlab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/format.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/operators.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/semigroup.hpp"

namespace driftlab::cli {
namespace {

struct Key {
  std::string_view name;
  std::string_view fallback;
};

constexpr std::pair<Command, std::string_view> kNames[] = {
    {Command::certify, "certify"},
    {Command::operator_check, "operator-check"},
    {Command::evolve, "evolve"},
    {Command::resolvent_check, "resolvent-check"},
    {Command::feller, "feller"},
    {Command::simulate, "simulate"},
    {Command::martingale, "martingale"},
    {Command::slope, "slope"},
    {Command::collapse, "collapse"},
    {Command::phase_diagram, "phase-diagram"},
    {Command::weighted_estimates, "weighted-estimates"},
};

std::vector<Key> schema(Command cmd) {
  std::vector<Key> keys;
  switch (cmd) {
    case Command::certify:
      keys = {{"c", "0.2"}, {"d", "3"}};
      break;
    case Command::operator_check:
      keys = {{"c", "0.2"},   {"d", "3"},       {"L", "8"},     {"grid_n", "64"},  {"lambda", "1"},
              {"n", "8"},     {"zeta", "corner"}, {"iters", "2000"}, {"tol", "1e-6"}};
      break;
    case Command::evolve:
      keys = {{"c", "0.2"},      {"d", "3"},          {"n", "4"},           {"L", "4"},
              {"grid_n", "32"},  {"dt", "0.01"},      {"times", "0,0.1,0.25"}, {"scheme", "implicit"},
              {"boundary", "absorbing"}, {"f_radius", "2"}};
      break;
    case Command::resolvent_check:
      keys = {{"c", "0.2"},   {"d", "3"},  {"n", "8"},   {"L", "4"},   {"grid_n", "32"},
              {"lambda", "1"}, {"zeta", "corner"}, {"p", "2"}, {"q", "3"}, {"r", "1.5"}, {"tail", "1e-10"}};
      break;
    case Command::feller:
      keys = {{"c", "0.2"},     {"d", "3"},           {"n_list", "2,4,8,16"}, {"L", "4"},
              {"grid_n", "32"}, {"dt", "0.01"},       {"t_max", "1"},         {"t_step", "0.1"},
              {"scheme", "implicit"}, {"boundary", "absorbing"}, {"f_radius", "2"}};
      break;
    case Command::simulate:
      keys = {{"c", "0.2"},    {"d", "3"},       {"n", "8"},         {"N", "10000"}, {"dt", "1e-3"},
              {"t", "1"},      {"x0", "1,0,0"},  {"stride", "100"},  {"radii", "2,4,8"},
              {"paths", ""},   {"seed", "20251019"}};
      break;
    case Command::martingale:
      keys = {{"c", "0.2"},    {"d", "3"},  {"n", "8"},  {"N", "20000"}, {"dt", "1e-3"},
              {"t", "0.5"},    {"x0", "0.5,0.3,0.2"}, {"windows", "0:0.1,0.1:0.25,0.25:0.5,0:0.5"},
              {"cutoff_k", "2"}, {"seed", "20251019"}};
      break;
    case Command::slope:
      keys = {{"c", "0.2"},  {"d", "3"},   {"n", "16"},  {"N", "50000"}, {"dt", "1e-4"},
              {"t", "0.5"},  {"r0", "1"},  {"fit_points", "50"}, {"seed", "20251019"}};
      break;
    case Command::collapse:
      keys = {{"c", "4"},   {"d", "3"},  {"n_list", "2,4,8"}, {"N", "20000"},
              {"dt", "1e-4"}, {"t", "0.25"}, {"seed", "20251019"}};
      break;
    case Command::phase_diagram:
      keys = {{"d_list", "3"}, {"c_grid", "0.1,0.2,1,2,3,4"}, {"budget", "60000"}, {"n", "8"},
              {"dt", "1e-3"},  {"t", "0.25"},   {"r0", "1"},   {"collapse_n", "2,4,8"},
              {"seed", "20251019"}};
      break;
    case Command::weighted_estimates:
      keys = {{"c", "0.2"},        {"d", "3"},       {"n_list", "2,4,8,16"}, {"L", "8"},
              {"grid_n", "32"},    {"p", "3"},       {"nu", "2"},            {"l", "1e-2"},
              {"l_checks", "1e-2,1e-3"}, {"mu", "corner"}, {"identity_L", "16"},
              {"identity_grid_n", "64"}, {"identity_mu", "4"}};
      break;
  }
  keys.push_back({"output", "-"});
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || !std::isfinite(x)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return x;
}

long long to_count(std::string_view key, std::string_view v) {
  // Accept 5e4 and 50000 alike, but only for exact integers.
  const double x = to_real(key, v);
  if (x != std::floor(x) || std::abs(x) > 9e15) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return static_cast<long long>(x);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

DriftField model(const Config& cfg) { return DriftField::model_radial(cfg.real("c"), cfg.integer("d")); }

Grid grid_of(const Config& cfg, std::string_view L_key = "L", std::string_view n_key = "grid_n") {
  return Grid(cfg.integer("d"), cfg.real(L_key), cfg.integer(n_key));
}

double corner_or(const Config& cfg, std::string_view key, double lambda) {
  if (cfg.text(key) == "corner") return kappa_d(cfg.integer("d")) * lambda;
  return cfg.real(key);
}

GridFunction bump_datum(const Grid& g, double radius) {
  if (!(radius > 0.0)) throw ConfigError("f_radius must be positive");
  const double r2 = radius * radius;
  return GridFunction::from(g, [r2](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return mollifier_bump(s / r2);
  });
}

GridFunction gaussian(const Grid& g, const Vec& centre, double width) {
  return GridFunction::from(g, [&centre, width](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - centre[i]) * (x[i] - centre[i]);
    return std::exp(-width * s);
  });
}

EvolutionConfig evolution_config(const Config& cfg) {
  EvolutionConfig ec;
  ec.grid = grid_of(cfg);
  ec.dt = cfg.real("dt");
  const auto& scheme = cfg.text("scheme");
  if (scheme == "implicit" || scheme == to_string(Scheme::implicit_diffusion_upwind_drift)) {
    ec.scheme = Scheme::implicit_diffusion_upwind_drift;
  } else if (scheme == "explicit" || scheme == to_string(Scheme::explicit_rk)) {
    ec.scheme = Scheme::explicit_rk;
  } else {
    throw ConfigError("scheme: expected implicit or explicit_rk, got '" + scheme + "'");
  }
  const auto& boundary = cfg.text("boundary");
  if (boundary == "periodic") {
    ec.boundary = Boundary::periodic;
  } else if (boundary == "absorbing") {
    ec.boundary = Boundary::absorbing;
  } else {
    throw ConfigError("boundary: expected periodic or absorbing, got '" + boundary + "'");
  }
  return ec;
}

Vec point_of(const Config& cfg, std::string_view key) {
  Vec x = cfg.reals(key);
  if (static_cast<int>(x.size()) != cfg.integer("d")) {
    throw ConfigError(std::string(key) + ": expected " + std::to_string(cfg.integer("d")) + " coordinates");
  }
  return x;
}

Vec radial_start(int d, double r0) {
  Vec x(static_cast<std::size_t>(d), 0.0);
  x[0] = r0;
  return x;
}

std::size_t paths_of(const Config& cfg, std::string_view key = "N") {
  const long long N = cfg.count(key);
  if (N < 2) throw ConfigError(std::string(key) + ": need at least two paths");
  return static_cast<std::size_t>(N);
}

std::uint64_t seed_of(const Config& cfg) {
  const long long s = cfg.count("seed");
  if (s < 0) throw ConfigError("seed must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

std::string operator_table(const std::vector<OperatorRow>& rows) {
  std::string csv = std::string(kOperatorCsvHeader) + '\n';
  for (const auto& r : rows) csv += to_csv_row(r) + '\n';
  return csv;
}

bool all_pass(const std::vector<OperatorRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const OperatorRow& r) { return r.pass; });
}

SdeRow sde_row(const Config& cfg, std::string experiment, int n, double dt, std::size_t N, std::string statistic,
               double value, double ci) {
  return SdeRow{std::move(experiment), cfg.real("c"), cfg.integer("d"), n, dt, N, std::move(statistic), value, ci};
}

std::string sde_table(const std::vector<SdeRow>& rows) {
  std::string csv = std::string(kSdeCsvHeader) + '\n';
  for (const auto& r : rows) csv += to_csv_row(r) + '\n';
  return csv;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

RunResult certify(const Config& cfg) {
  const double c = cfg.real("c");
  const int d = cfg.integer("d");
  const Certificate cert = model_certificate(c, d);
  const Thresholds th = admissibility_threshold(d);
  RunResult r;
  r.csv = std::string(kCertificateCsvHeader) + ",c_max,delta_max,nonexistence\n" + to_csv_row(cert) + ',' +
          format_double(th.c_max) + ',' + format_double(th.delta_max) + ',' + bool_text(c >= d) + '\n';
  return r;
}

RunResult operator_check(const Config& cfg) {
  const double c = cfg.real("c");
  const int d = cfg.integer("d");
  const double lambda = cfg.real("lambda");
  const int iters = cfg.integer("iters");
  const double tol = cfg.real("tol");
  const Grid g = grid_of(cfg);
  const double L = g.half_width();
  const int N = g.points_per_axis();
  const Certificate cert = model_certificate(c, d);

  const GridFunction b = sample_drift(DriftField::model_radial(c, d), g);
  const GridFunction b2 = sample_drift(DriftField::model_radial(2.0 * c, d), g);
  std::vector<OperatorRow> rows;

  const NormEstimate w1 = weak_formbound_estimate(b, lambda, iters, tol);
  const NormEstimate w2 = weak_formbound_estimate(b2, lambda, iters, tol);
  const double wbound = 1.1 * cert.delta;
  rows.push_back({"weak_formbound", L, N, lambda, w1.value, wbound, w1.value <= wbound});
  const double ratio = w1.value > 0.0 ? w2.value / w1.value : 0.0;
  rows.push_back({"weak_formbound_scaling", L, N, lambda, ratio, 2.0,
                  w1.value > 0.0 ? std::abs(ratio - 2.0) <= 2e-12 : w2.value == 0.0});

  const NormEstimate f1 = formbound_estimate(b, lambda, iters, tol);
  const double fbound = 1.1 * form_bounded_certificate(c, d).delta;
  rows.push_back({"formbound", L, N, lambda, f1.value, fbound, f1.value <= fbound});

  const DualityCheck dual = duality_check(b, lambda, iters);
  rows.push_back({"duality_gap", L, N, lambda, dual.relative_gap, 1e-6, dual.relative_gap <= 1e-6});

  OperatorBundle bundle = OperatorBundle::at_corner(d, lambda);
  bundle.zeta = corner_or(cfg, "zeta", lambda);
  bundle.validate(d);
  const GridFunction bn = sample_drift(MollifiedDrift(DriftField::model_radial(c, d), cfg.integer("n")), g);
  const NormEstimate tn = t_norm_estimate(bundle, bn, iters);
  const double tbound = 1.1 * m_d_constant(d) * c_p(2.0) * cert.delta;
  rows.push_back({"t_norm", L, N, bundle.zeta.real(), tn.value, tbound, tn.value <= tbound});

  return {all_pass(rows), operator_table(rows)};
}

RunResult evolve_cmd(const Config& cfg) {
  const EvolutionConfig ec = evolution_config(cfg);
  const GridFunction f = bump_datum(ec.grid, cfg.real("f_radius"));
  std::vector<double> times = cfg.reals("times");
  const MollifiedDrift b(model(cfg), cfg.integer("n"));
  const auto snaps = Evolver(sample_drift(b, ec.grid), ec).snapshots(f, times);

  const double sup_f = norm_inf(f);
  RunResult r;
  std::string csv = snapshot_csv_header(ec.grid.dimension()) + '\n';
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    csv += snapshot_csv_rows(times[k], snaps[k]);
    double lo = 0.0;
    for (std::size_t i = 0; i < ec.grid.size(); ++i) lo = std::min(lo, snaps[k][i].real());
    r.pass = r.pass && norm_inf(snaps[k]) <= sup_f + 1e-8 && lo >= -1e-8;
  }
  r.csv = std::move(csv);
  return r;
}

RunResult resolvent_check(const Config& cfg) {
  const Grid g = grid_of(cfg);
  const double lambda = cfg.real("lambda");
  const double zeta = corner_or(cfg, "zeta", lambda);
  const GridFunction b = sample_drift(MollifiedDrift(model(cfg), cfg.integer("n")), g);
  const GridFunction f = gaussian(g, Vec(static_cast<std::size_t>(g.dimension()), 0.0), 1.0);

  const FactorizedResolvent fr =
      factorized_resolvent(b, zeta, f, cfg.real("p"), cfg.real("q"), cfg.real("r"), cfg.real("tail"));
  const GridFunction direct = spectral_resolvent_solve(b, zeta, f, 1e-12);
  const double err = norm_l2(fr.u - direct) / norm_l2(direct);

  const double L = g.half_width();
  const int N = g.points_per_axis();
  std::vector<OperatorRow> rows{
      {"factorized_vs_direct", L, N, zeta, err, 1e-6, err <= 1e-6},
      {"neumann_ratio", L, N, zeta, fr.contraction_ratio, fr.t_norm + 0.05, fr.contraction_ratio <= fr.t_norm + 0.05},
      {"t_norm", L, N, zeta, fr.t_norm, 1.0, fr.t_norm < 1.0},
  };
  return {all_pass(rows), operator_table(rows)};
}

RunResult feller(const Config& cfg) {
  const EvolutionConfig ec = evolution_config(cfg);
  const GridFunction f = bump_datum(ec.grid, cfg.real("f_radius"));
  const double t_max = cfg.real("t_max");
  const double t_step = cfg.real("t_step");
  if (!(t_step > 0.0) || t_max < 0.0) throw ConfigError("feller: need t_step > 0 and t_max >= 0");
  std::vector<double> times;
  const auto count = static_cast<long>(std::floor(t_max / t_step + 1e-9));
  for (long k = 0; k <= count; ++k) times.push_back(static_cast<double>(k) * t_step);

  const auto rows = feller_convergence_report(model(cfg), f, cfg.integers("n_list"), times, ec);
  RunResult r;
  r.csv = std::string(kConvergenceCsvHeader) + '\n';
  for (const auto& row : rows) r.csv += to_csv_row(row) + '\n';
  r.pass = strictly_decreasing(rows);
  return r;
}

RunResult simulate_cmd(const Config& cfg) {
  const int n = cfg.integer("n");
  const double dt = cfg.real("dt");
  const double t = cfg.real("t");
  const std::size_t N = paths_of(cfg);
  const long long stride = cfg.count("stride");
  if (stride < 1) throw ConfigError("stride must be positive");
  const MollifiedDrift b(model(cfg), n);
  const PathEnsemble ens =
      simulate(b, point_of(cfg, "x0"), dt, t, N, seed_of(cfg), SimulationOptions{static_cast<std::size_t>(stride), 0.0});

  std::vector<SdeRow> rows;
  const MeanCi sq = expectation(
      ens,
      [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
      },
      t);
  rows.push_back(sde_row(cfg, "simulate", n, dt, N, "mean_sq", sq.mean, sq.ci));
  std::vector<double> integrals(N);
  for (std::size_t i = 0; i < N; ++i) integrals[i] = ens.drift_integral(i);
  const MeanCi di = mean_ci(integrals);
  rows.push_back(sde_row(cfg, "simulate", n, dt, N, "drift_integral", di.mean, di.ci));
  for (const auto& e : explosion_check(ens, cfg.reals("radii"))) {
    rows.push_back(sde_row(cfg, "simulate", n, dt, N, "p_sup_gt_" + format_double(e.R), e.probability, e.ci));
  }
  rows.push_back(sde_row(cfg, "simulate", n, dt, N, "continuity_ratio", continuity_modulus_ratio(ens), 0.0));

  if (!cfg.text("paths").empty()) write_paths_binary(ens, cfg.text("paths"));
  return {true, sde_table(rows)};
}

std::vector<Window> parse_windows(const Config& cfg) {
  std::vector<Window> out;
  for (const auto& w : split(cfg.text("windows"), ',')) {
    const auto parts = split(w, ':');
    if (parts.size() != 2) throw ConfigError("windows: expected s:t pairs, got '" + w + "'");
    out.push_back(Window{to_real("windows", parts[0]), to_real("windows", parts[1])});
  }
  if (out.empty()) throw ConfigError("windows: need at least one window");
  return out;
}

RunResult martingale(const Config& cfg) {
  const int d = cfg.integer("d");
  const int n = cfg.integer("n");
  const double dt = cfg.real("dt");
  const double t = cfg.real("t");
  const std::size_t N = paths_of(cfg);
  const auto windows = parse_windows(cfg);
  const MollifiedDrift b(model(cfg), n);
  const long steps = std::lround(t / dt);
  const PathEnsemble ens = simulate(b, point_of(cfg, "x0"), dt, t, N, seed_of(cfg),
                                    SimulationOptions{static_cast<std::size_t>(std::max(1L, steps)), 0.0});

  const std::vector<TestFunction> fs{TestFunction::coordinate(0), TestFunction::product(0, 1),
                                     TestFunction::squared_norm(),
                                     TestFunction::cutoff_polynomial(cfg.integer("cutoff_k"), d)};
  RunResult r;
  std::vector<SdeRow> rows;
  for (const auto& f : fs) {
    const MartingaleReport rep = martingale_test(ens, f, windows);
    r.pass = r.pass && rep.pass;
    for (const auto& w : rep.windows) {
      rows.push_back(sde_row(cfg, "martingale", n, dt, N,
                             rep.test_function + '@' + format_double(w.s) + ':' + format_double(w.t), w.mean, w.ci));
    }
  }
  r.csv = sde_table(rows);
  return r;
}

RunResult slope(const Config& cfg) {
  const int d = cfg.integer("d");
  const long long fit = cfg.count("fit_points");
  if (fit < 2) throw ConfigError("fit_points must be at least 2");
  const SlopeResult s = radial_slope_experiment(cfg.real("c"), d, radial_start(d, cfg.real("r0")), cfg.integer("n"),
                                                cfg.real("dt"), paths_of(cfg), cfg.real("t"), seed_of(cfg),
                                                static_cast<std::size_t>(fit));
  std::vector<SdeRow> rows;
  auto add = [&](std::string stat, double v, double ci) {
    rows.push_back(sde_row(cfg, "slope", s.n, s.dt, s.N, std::move(stat), v, ci));
  };
  const double tolerance = std::max(3.0 * s.ci, 0.05 * std::abs(s.expected));
  add("slope", s.slope, s.ci);
  add("expected", s.expected, 0.0);
  add("tolerance", tolerance, 0.0);
  add("stop_radius", s.stop_radius, 0.0);
  add("stopped_fraction", s.stopped_fraction, 0.0);
  add("insufficient_survival", s.insufficient_survival ? 1.0 : 0.0, 0.0);
  return {std::abs(s.slope - s.expected) <= tolerance, sde_table(rows)};
}

RunResult collapse(const Config& cfg) {
  const double c = cfg.real("c");
  const int d = cfg.integer("d");
  const CollapseResult res =
      collapse_experiment(c, d, cfg.integers("n_list"), cfg.real("dt"), paths_of(cfg), cfg.real("t"), seed_of(cfg));
  std::vector<SdeRow> rows;
  for (const auto& row : res.rows) {
    rows.push_back(sde_row(cfg, "collapse", row.n, res.dt, res.N, "mean_sq", row.mean_sq, row.ci));
  }
  rows.push_back(sde_row(cfg, "collapse", 0, res.dt, res.N, "nonincreasing", res.nonincreasing ? 1.0 : 0.0, 0.0));
  return {c < d || res.nonincreasing, sde_table(rows)};
}

RunResult phase_diagram(const Config& cfg) {
  const auto d_list = cfg.integers("d_list");
  const auto c_grid = cfg.reals("c_grid");
  const auto collapse_n = cfg.integers("collapse_n");
  const long long budget = cfg.count("budget");
  const int n = cfg.integer("n");
  const double dt = cfg.real("dt");
  const double t = cfg.real("t");
  const std::uint64_t seed = seed_of(cfg);

  RunResult r;
  r.csv = "d,c,c_max,c_critical,delta,admissible,verdict,slope,slope_ci,slope_expected,collapse_nonincreasing\n";
  long long runs = 0;
  for (int d : d_list) {
    for (double c : c_grid) {
      if (model_certificate(c, d).admissible) ++runs;
      if (c >= d) runs += static_cast<long long>(collapse_n.size());
    }
  }
  if (runs == 0) return r;
  const long long per_run = budget / runs;
  if (per_run < 2) throw ConfigError("budget: " + std::to_string(budget) + " paths cannot cover " +
                                     std::to_string(runs) + " runs");

  for (int d : d_list) {
    const Thresholds th = admissibility_threshold(d);
    for (double c : c_grid) {
      const Certificate cert = model_certificate(c, d);
      std::string verdict = "gap_uncovered";
      std::string slope_cells = ",,";
      std::string collapse_cell;
      if (cert.admissible) {
        verdict = "existence_certified";
        const SlopeResult s = radial_slope_experiment(c, d, radial_start(d, cfg.real("r0")), n, dt,
                                                      static_cast<std::size_t>(per_run), t, seed);
        slope_cells = format_double(s.slope) + ',' + format_double(s.ci) + ',' + format_double(s.expected);
      }
      if (c >= d) {
        verdict = "nonexistence";
        const CollapseResult col =
            collapse_experiment(c, d, collapse_n, dt, static_cast<std::size_t>(per_run), t, seed);
        collapse_cell = bool_text(col.nonincreasing);
      }
      r.csv += std::to_string(d) + ',' + format_double(c) + ',' + format_double(th.c_max) + ',' + std::to_string(d) +
               ',' + format_double(cert.delta) + ',' + bool_text(cert.admissible) + ',' + verdict + ',' +
               slope_cells + ',' + collapse_cell + '\n';
    }
  }
  return r;
}

RunResult weighted_estimates(const Config& cfg) {
  const int d = cfg.integer("d");
  const Grid g = grid_of(cfg);
  const double p = cfg.real("p");
  const double mu = corner_or(cfg, "mu", 1.0);
  const WeightSpec weight{cfg.real("l"), cfg.real("nu")};

  std::vector<GridFunction> samples;
  for (double shift : {0.0, 1.0, 2.0}) {
    Vec centre(static_cast<std::size_t>(d), 0.0);
    centre[0] = shift;
    if (d > 1) centre[1] = shift / 2.0;
    for (double width : {1.0, 4.0}) samples.push_back(gaussian(g, centre, width));
  }
  const WeightedEstimateReport rep = weighted_estimate_report(model(cfg), cfg.integers("n_list"), mu, p, weight, samples);

  RunResult r;
  std::string csv = "statistic,n,value,bound,pass\n";
  for (const auto& row : rep.rows) {
    csv += "k1," + std::to_string(row.n) + ',' + format_double(row.k1) + ",,\n";
    csv += "k2," + std::to_string(row.n) + ',' + format_double(row.k2) + ",,\n";
  }
  auto add = [&](const std::string& stat, double value, double bound, bool pass) {
    csv += stat + ",0," + format_double(value) + ',' + format_double(bound) + ',' + bool_text(pass) + '\n';
    r.pass = r.pass && pass;
  };
  add("k1_trend", rep.k1_trend, kMaxTrend, rep.k1_trend <= kMaxTrend);
  add("k2_trend", rep.k2_trend, kMaxTrend, rep.k2_trend <= kMaxTrend);

  for (double l : cfg.reals("l_checks")) {
    const WeightBoundCheck wb = check_weight_bounds(WeightSpec{l, weight.nu}, g);
    add("gradient_ratio_l=" + format_double(l), wb.max_gradient_ratio, wb.gradient_bound,
        wb.max_gradient_ratio <= wb.gradient_bound);
    add("laplacian_ratio_l=" + format_double(l), wb.max_laplacian_ratio, wb.laplacian_bound,
        wb.max_laplacian_ratio <= wb.laplacian_bound);
  }

  const Grid gi(d, cfg.real("identity_L"), cfg.integer("identity_grid_n"));
  const GridFunction f = GridFunction::from(gi, [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::exp(-s / 4.0);
  });
  for (double l : cfg.reals("l_checks")) {
    const double res = weight_identity_residual(WeightSpec{l, weight.nu}, cfg.real("identity_mu"), f);
    add("identity_residual_l=" + format_double(l), res, 1e-10, res <= 1e-10);
  }
  r.csv = std::move(csv);
  return r;
}

}  // namespace

std::string_view to_string(Command c) {
  for (const auto& [cmd, name] : kNames) {
    if (cmd == c) return name;
  }
  return "?";
}

Command parse_command(std::string_view name) {
  for (const auto& [cmd, n] : kNames) {
    if (n == name) return cmd;
  }
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

std::vector<std::string_view> command_names() {
  std::vector<std::string_view> out;
  for (const auto& [cmd, name] : kNames) out.push_back(name);
  return out;
}

Config Config::parse(const std::vector<std::string>& tokens) {
  std::optional<std::string> command;
  std::vector<std::pair<std::string, std::string>> given;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      if (i != 0) throw ConfigError("expected key=value, got '" + tok + "'");
      command = trim(tok);
      continue;
    }
    const std::string key = trim(std::string_view(tok).substr(0, eq));
    const std::string value = trim(std::string_view(tok).substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key in '" + tok + "'");
    if (key == "command") {
      command = value;
    } else {
      given.emplace_back(key, value);
    }
  }
  if (!command) throw ConfigError("no command given");

  Config cfg;
  cfg.command_ = parse_command(*command);
  const auto keys = schema(cfg.command_);
  for (const auto& k : keys) cfg.values_.emplace_back(std::string(k.name), std::string(k.fallback));
  for (const auto& [key, value] : given) {
    auto it = std::find_if(cfg.values_.begin(), cfg.values_.end(), [&](const auto& kv) { return kv.first == key; });
    if (it == cfg.values_.end()) {
      throw ConfigError("unknown key '" + key + "' for command " + std::string(to_string(cfg.command_)));
    }
    it->second = value;
  }
  return cfg;
}

std::vector<std::string> Config::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.find('=') == std::string::npos) throw ConfigError(path + ": expected key=value, got '" + t + "'");
    tokens.push_back(t);
  }
  return tokens;
}

const std::string& Config::text(std::string_view key) const {
  for (const auto& kv : values_) {
    if (kv.first == key) return kv.second;
  }
  throw std::logic_error("config key not in schema: " + std::string(key));
}

double Config::real(std::string_view key) const { return to_real(key, text(key)); }

long long Config::count(std::string_view key) const { return to_count(key, text(key)); }

int Config::integer(std::string_view key) const {
  const long long v = count(key);
  if (v < -2147483647LL || v > 2147483647LL) throw ConfigError(std::string(key) + ": out of range");
  return static_cast<int>(v);
}

bool Config::flag(std::string_view key) const {
  const auto& v = text(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + v + "'");
}

std::vector<double> Config::reals(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : split(text(key), ',')) out.push_back(to_real(key, item));
  return out;
}

std::vector<int> Config::integers(std::string_view key) const {
  std::vector<int> out;
  for (const auto& item : split(text(key), ',')) out.push_back(static_cast<int>(to_count(key, item)));
  return out;
}

std::string Config::header() const {
  std::string h = "# driftlab " DRIFTLAB_VERSION "\n# command=" + std::string(to_string(command_)) + '\n';
  for (const auto& [k, v] : values_) h += "# " + k + '=' + v + '\n';
  return h;
}

RunResult run(const Config& config) {
  switch (config.command()) {
    case Command::certify:
      return certify(config);
    case Command::operator_check:
      return operator_check(config);
    case Command::evolve:
      return evolve_cmd(config);
    case Command::resolvent_check:
      return resolvent_check(config);
    case Command::feller:
      return feller(config);
    case Command::simulate:
      return simulate_cmd(config);
    case Command::martingale:
      return martingale(config);
    case Command::slope:
      return slope(config);
    case Command::collapse:
      return collapse(config);
    case Command::phase_diagram:
      return phase_diagram(config);
    case Command::weighted_estimates:
      return weighted_estimates(config);
  }
  throw std::logic_error("unhandled command");
}

int run_tokens(const std::vector<std::string>& tokens, std::ostream& out, std::ostream& err) {
  try {
    const Config cfg = Config::parse(tokens);
    const std::string& target = cfg.text("output");
    std::ofstream file;
    if (target != "-") {
      file.open(target, std::ios::binary);
      if (!file) throw ConfigError("cannot open output " + target);
    }
    const RunResult result = run(cfg);
    std::ostream& sink = target == "-" ? out : file;
    sink << cfg.header() << result.csv;
    sink.flush();
    if (!sink) {
      err << "error: writing output failed\n";
      return 1;
    }
    if (!result.pass) err << "assertion failed: " << to_string(cfg.command()) << '\n';
    return result.pass ? 0 : 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionTooSmall& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const StepTooLarge& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const StabilityViolation& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace driftlab::cli
