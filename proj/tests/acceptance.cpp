// Acceptance run: one PASS/FAIL line per criterion at full statistical size.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "driftlab/cli.hpp"
#include "driftlab/drift.hpp"
#include "driftlab/format.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/sde.hpp"
#include "driftlab/semigroup.hpp"
#include "oracle_values.hpp"

using namespace driftlab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Table = std::vector<std::vector<std::string>>;

Table parse_csv(const std::string& csv) {
  Table t;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    t.push_back(std::move(cells));
  }
  return t;
}

cli::RunResult run(const std::vector<std::string>& tokens) { return cli::run(cli::Config::parse(tokens)); }

// Rows of an SDE table whose statistic column matches.
const std::vector<std::string>* sde_stat(const Table& t, const std::string& stat, std::size_t skip = 0) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i].size() == 9 && t[i][6] == stat && skip-- == 0) return &t[i];
  }
  return nullptr;
}

double cell(const std::vector<std::string>* row, std::size_t col) { return row ? std::stod((*row)[col]) : NAN; }

// "name=value" for every row of a statistic,value[,bound,pass] table.
std::string summarize(const Table& t, std::size_t name_col, std::size_t value_col) {
  std::string s;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i].size() <= value_col) continue;
    if (!s.empty()) s += ' ';
    s += t[i][name_col] + '=' + t[i][value_col];
  }
  return s;
}

Verdict thresholds() {
  const double m3 = m_d_constant(3), m4 = m_d_constant(4);
  const Thresholds t3 = admissibility_threshold(3), t4 = admissibility_threshold(4);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-5 * std::abs(b); };
  const bool constants = close(m3, oracle::kM3) && close(m4, oracle::kM4) && close(t3.delta_max, oracle::kDeltaMax3) &&
                         close(t3.c_max, oracle::kCMax3) && close(t4.delta_max, oracle::kDeltaMax4) &&
                         close(t4.c_max, oracle::kCMax4);
  const auto cert = run({"certify", "c=0.2", "d=3"});
  const Table t = parse_csv(cert.csv);
  const bool row = t.size() == 2 && t[1][3] == "0.16" && t[1][5] == "true";
  return {constants && row && cert.pass, "m_3=" + format_double(m3) + " delta_max=" + format_double(t3.delta_max) +
                                             " c_max=" + format_double(t3.c_max) + " certify(c=0.2): delta=" +
                                             (t.size() == 2 ? t[1][3] + " admissible=" + t[1][5] : "?")};
}

Verdict table_command(const std::vector<std::string>& tokens, std::size_t name_col, std::size_t value_col) {
  const auto r = run(tokens);
  return {r.pass, summarize(parse_csv(r.csv), name_col, value_col)};
}

Verdict semigroup_structure() {
  bool pass = true;
  std::string detail;
  for (const char* boundary : {"absorbing", "periodic"}) {
    const auto r = run({"evolve", "n=8", "times=0,0.1,0.25,0.5,1", std::string("boundary=") + boundary});
    pass = pass && r.pass;
    detail += std::string(detail.empty() ? "" : " ") + boundary + (r.pass ? ":ok" : ":violated");
  }
  return {pass, "sup-norm contraction and positivity " + detail};
}

Verdict feller() {
  const auto r = run({"feller"});
  const Table t = parse_csv(r.csv);
  std::string s = "sup_diff";
  for (std::size_t i = 1; i < t.size(); ++i) s += ' ' + t[i][0] + '/' + t[i][1] + '=' + t[i][2];
  return {r.pass, s + " strictly decreasing"};
}

double bump_f(std::span<const double> x) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return mollifier_bump(r2 / 4.0);
}

// Monte Carlo E f(X_t) against the grid semigroup at two resolutions.
Verdict markov() {
  const MollifiedDrift b(DriftField::model_radial(0.2, 3), 4);
  const std::vector<Vec> points{{0.5, 0, 0}, {0, 0.75, 0}, {0.25, 0.25, 0.5}, {-0.5, 0.25, 0}, {1, -0.5, 0.25}};
  const std::vector<double> times{0.1, 0.25};
  std::vector<std::vector<GridFunction>> u;
  for (int m : {32, 64}) {
    EvolutionConfig cfg;
    cfg.grid = Grid(3, 4.0, m);
    cfg.dt = 0.0025;
    cfg.boundary = Boundary::absorbing;
    u.push_back(Evolver(sample_drift(b, cfg.grid), cfg).snapshots(GridFunction::from(cfg.grid, bump_f), times));
  }
  bool pass = true;
  double worst = 0.0;  // largest |mc - u64| / tolerance
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto ens = simulate(b, points[p], 5e-4, 0.25, 40000, 7 + p, SimulationOptions{100, 0.0});
    for (std::size_t k = 0; k < times.size(); ++k) {
      const MeanCi mc = expectation(ens, bump_f, times[k]);
      const double u32 = u[0][k][u[0][k].grid().nearest(points[p])].real();
      const double u64 = u[1][k][u[1][k].grid().nearest(points[p])].real();
      const double tol = 3.0 * mc.ci + std::abs(u32 - u64);
      const double err = std::abs(mc.mean - u64);
      pass = pass && err <= tol;
      worst = std::max(worst, err / tol);
    }
  }
  return {pass, "5 points x 2 times, max |mc - u64| / (3ci + |u32 - u64|) = " + format_double(worst)};
}

Verdict slope(double c) {
  const auto r = run({"slope", "c=" + format_double(c)});
  const Table t = parse_csv(r.csv);
  std::string detail = "slope=" + format_double(cell(sde_stat(t, "slope"), 7)) + " ci=" +
                       format_double(cell(sde_stat(t, "slope"), 8)) + " expected=" +
                       format_double(cell(sde_stat(t, "expected"), 7)) + " tol=" +
                       format_double(cell(sde_stat(t, "tolerance"), 7)) + " stopped=" +
                       format_double(cell(sde_stat(t, "stopped_fraction"), 7));
  if (cell(sde_stat(t, "insufficient_survival"), 7) == 1.0) detail += " (insufficient_survival flagged)";
  return {r.pass, detail};
}

std::vector<CollapseRow> collapse_rows(double c) {
  const auto r = run({"collapse", "c=" + format_double(c)});
  const Table t = parse_csv(r.csv);
  std::vector<CollapseRow> rows;
  for (std::size_t k = 0; const auto* row = sde_stat(t, "mean_sq", k); ++k)
    rows.push_back({std::stoi((*row)[3]), std::stod((*row)[7]), std::stod((*row)[8])});
  return rows;
}

std::string means(const std::vector<CollapseRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += (s.empty() ? "" : " ") + ("n=" + std::to_string(r.n) + ':' + format_double(r.mean_sq));
  return s;
}

Verdict collapse() {
  const auto rows = collapse_rows(4.0);
  bool pass = rows.size() == 3;
  for (std::size_t i = 1; i < rows.size(); ++i) pass = pass && rows[i].mean_sq <= rows[i - 1].mean_sq;
  return {pass, "c=4 mean|X_t|^2 " + means(rows) + " nonincreasing in n"};
}

Verdict collapse_control() {
  const auto rows = collapse_rows(0.0);
  bool pass = rows.size() == 3;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double radius = std::hypot(rows[i].ci, rows[i - 1].ci);
    pass = pass && std::abs(rows[i].mean_sq - rows[i - 1].mean_sq) <= radius;
  }
  return {pass, "c=0 " + means(rows) + " consecutive levels agree within combined ci"};
}

Verdict martingale(double c) {
  const auto r = run({"martingale", "c=" + format_double(c)});
  const Table t = parse_csv(r.csv);
  double worst = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double ci = std::stod(t[i][8]);
    if (ci > 0) worst = std::max(worst, std::abs(std::stod(t[i][7])) / ci);
  }
  return {r.pass, std::to_string(t.size() - 1) + " function/window residuals, max |mean|/ci = " + format_double(worst)};
}

}  // namespace

int main() {
  struct Criterion {
    std::string name;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {"threshold_table", thresholds},
      {"operator_certificates", [] { return table_command({"operator-check"}, 0, 4); }},
      {"factorized_resolvent", [] { return table_command({"resolvent-check"}, 0, 4); }},
      {"semigroup_structure", semigroup_structure},
      {"feller_cauchy", feller},
      {"markov_consistency", markov},
      {"martingale_brownian", [] { return martingale(0.0); }},
      {"martingale_drift", [] { return martingale(0.2); }},
      {"radial_slope_c0.2", [] { return slope(0.2); }},
      {"radial_slope_brownian", [] { return slope(0.0); }},
      {"radial_slope_critical_c3", [] { return slope(3.0); }},
      {"collapse_c4", collapse},
      {"collapse_control_c0", collapse_control},
      {"weighted_estimates", [] { return table_command({"weighted-estimates"}, 0, 2); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
