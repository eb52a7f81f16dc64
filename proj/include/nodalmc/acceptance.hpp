#pragma once

#include <chrono>
#include <functional>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "nodalmc/cli/commands.hpp"

namespace nodalmc::acceptance {

// Run configurations. The files under configs/ carry the same text.
inline constexpr const char* kIntervalToml = R"(seed = 7

[model]
name = "interval"

[propagation]
walkers = 5000
dt = 2.5e-4
total_time = 3.0
lambda = 0.0
mode = "plain"
initial = "uniform_box"
max_exit_time = 20.0

[mu]
functionals = ["1", "x"]

[shape]
velocity = "endpoints"
left = 0.0
right = 1.0
)";

inline constexpr const char* kSymmetricIntervalToml = R"(seed = 17

[model]
name = "interval"
params = { left = -1.0, length = 2.0, symmetric = 1.0 }

[propagation]
walkers = 20000
dt = 1e-3
total_time = 4.0
lambda = 0.0
mode = "plain"
max_exit_time = 40.0

[shape]
velocity = "endpoints"
left = 1.0
right = 1.0
)";

inline constexpr const char* kOddWellTheta0Toml = R"(seed = 101

[model]
name = "odd_well3d"
theta = [0.0, 0.0]

[propagation]
walkers = 20000
dt = 1e-3
total_time = 3.0
lambda = 0.0
mode = "drifted"
initial = "trial"

[oracle]
spacing = 0.15
boundary = "linear_ghost"
fd_delta = 0.02
)";

inline constexpr const char* kOddWellTheta01Toml = R"(seed = 202

[model]
name = "odd_well3d"
theta = [0.1, 0.0]

[propagation]
walkers = 20000
dt = 1e-3
total_time = 3.0
lambda = 0.0
mode = "drifted"
initial = "trial"

[oracle]
spacing = 0.15
boundary = "linear_ghost"
fd_delta = 0.02
)";

inline constexpr const char* kOddWellTheta03Toml = R"(seed = 303

[model]
name = "odd_well3d"
theta = [0.3, 0.0]

[propagation]
walkers = 100000
dt = 1e-3
total_time = 3.0
lambda = 0.0
mode = "drifted"
initial = "trial"
)";

inline constexpr const char* kOddWellStartToml = R"(seed = 404

[model]
name = "odd_well3d"
theta = [0.2, 0.1]

[propagation]
walkers = 20000
dt = 1e-3
total_time = 2.0
lambda = 0.0
mode = "drifted"
initial = "trial"

[optimize]
step = 0.5
iterations = 15
gradient = "surface"
)";

inline constexpr const char* kTwoFermionToml = R"(seed = 505

[model]
name = "two_fermion_trap"
theta = [0.0]

[propagation]
walkers = 2000
dt = 1e-3
total_time = 1.0
lambda = 0.0
mode = "drifted"
initial = "trial"

[vmc]
steps = 20000
proposal_scale = 1.0
)";

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  std::set<int> only;  //!< empty: all
  int threads = 1;
  std::ostream* log = nullptr;  //!< per-command diagnostics; null discards
};

namespace detail {

class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

inline const cli::ResultRecord& find(const std::vector<cli::ResultRecord>& rs, const std::string& q) {
  for (const auto& r : rs)
    if (r.quantity == q) return r;
  throw UsageError("missing record '" + q + "'");
}

struct Context {
  Options options;
  std::ostream& log;

  cli::RunConfig config(const char* toml, const std::string& name, std::vector<std::string> overrides = {}) const {
    overrides.push_back("output.walltime=false");
    auto c = cli::parse_config_string(toml, name, overrides);
    c.threads = options.threads;
    return c;
  }
  std::vector<cli::ResultRecord> run(const std::string& cmd, const cli::RunConfig& c) const { return cli::run_command(cmd, c, log); }
};

// CSV from criteria 1 and 5 at one thread, kept for the determinism check
struct Shared {
  std::string interval_csv;
  std::string odd_well_csv;
};

inline CriterionResult c1(const Context& ctx, Shared& sh) {
  CriterionResult r{1, "interval energy", false, {}, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  auto c = ctx.config(kIntervalToml, "interval.toml");
  c.threads = 1;
  const auto rec = ctx.run("dmc", c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sh.interval_csv = cli::render_csv(rec);
  const auto& e = find(rec, "energy");
  const double ref = std::numbers::pi * std::numbers::pi / 2.0;
  const double v = e.value[0], s = e.std_error[0];
  r.passed = std::abs(v - ref) <= 3.0 * s && s <= 0.06 && secs < 60.0;
  r.detail = "E = " + fmt(v) + " +- " + fmt(s, 3) + " vs pi^2/2 = " + fmt(ref) + " (|dE| / sigma = " + fmt(std::abs(v - ref) / s, 3) +
             ", sigma <= 0.06, run " + fmt(secs, 3) + " s < 60 s)";
  return r;
}

inline CriterionResult c2(const Context& ctx, Shared&) {
  CriterionResult r{2, "hitting identity", false, {}, 0.0};
  r.passed = true;
  std::ostringstream d;
  const double budget = 0.5 * std::sqrt(2.5e-4);
  for (double lambda : {0.0, 1.0}) {
    const auto c = ctx.config(kIntervalToml, "interval.toml", {"propagation.lambda=" + cli::format_number(lambda)});
    const auto rec = ctx.run("mu", c);
    const auto ref = oracle::analytic_interval_reference(0.0, 1.0, false, 0.0, lambda,
                                                         {[](double) { return 1.0; }, [](double x) { return x; }});
    const char* names[] = {"mu[1]", "mu[x]"};
    for (int k = 0; k < 2; ++k) {
      const auto& m = find(rec, names[k]);
      const double dev = std::abs(m.value[0] - ref.mu_functionals[static_cast<std::size_t>(k)]);
      const bool ok = dev <= 3.0 * m.std_error[0] + budget;
      r.passed = r.passed && ok;
      d << "lambda=" << lambda << ' ' << names[k] << " = " << fmt(m.value[0]) << " +- " << fmt(m.std_error[0], 3) << " (ref "
        << fmt(ref.mu_functionals[static_cast<std::size_t>(k)]) << ")" << (ok ? "" : " FAIL") << "; ";
    }
  }
  d << "tolerance 3 sigma + " << fmt(budget, 3);
  r.detail = d.str();
  return r;
}

inline CriterionResult c3(const Context& ctx, Shared&) {
  CriterionResult r{3, "shape derivative", false, {}, 0.0};
  using std::numbers::pi;
  const auto a = ctx.run("shape", ctx.config(kIntervalToml, "interval.toml"));
  const auto& ra = find(a, "shape_derivative");
  const double ref_a = -pi * pi;
  const bool ok_a = std::abs(ra.value[0] - ref_a) <= std::max(0.05 * std::abs(ref_a), 3.0 * ra.std_error[0]);
  const auto b = ctx.run("shape", ctx.config(kSymmetricIntervalToml, "interval_symmetric.toml"));
  const auto& rb = find(b, "shape_derivative");
  const double ref_b = -pi * pi / 4.0;
  const bool ok_b = std::abs(rb.value[0] - ref_b) <= 0.05 * std::abs(ref_b);
  r.passed = ok_a && ok_b;
  r.detail = "right end " + fmt(ra.value[0]) + " +- " + fmt(ra.std_error[0], 3) + " vs " + fmt(ref_a) + " (5% or 3 sigma)" +
             (ok_a ? "" : " FAIL") + "; symmetric " + fmt(rb.value[0]) + " +- " + fmt(rb.std_error[0], 3) + " vs " + fmt(ref_b) +
             " (5%)" + (ok_b ? "" : " FAIL");
  return r;
}

inline CriterionResult c4(const Context& ctx, Shared&) {
  CriterionResult r{4, "gradient null case", false, {}, 0.0};
  int good = 0;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto c = ctx.config(kOddWellTheta0Toml, "odd_well_theta0.toml",
                              {"seed=" + std::to_string(1000 + k), "propagation.walkers=5000", "propagation.total_time=2.0"});
    const auto rec = ctx.run("grad", c);
    double m = 0.0;
    for (const char* q : {"grad_surface", "grad_bulk"}) {
      const auto& g = find(rec, q);
      for (std::size_t i = 0; i < g.value.size(); ++i) {
        const double z = g.std_error[i] > 0 ? std::abs(g.value[i] / g.std_error[i]) : (g.value[i] == 0 ? 0.0 : INFINITY);
        m = std::max(m, z);
      }
    }
    worst = std::max(worst, m);
    if (m < 3.0) ++good;
  }
  r.passed = good >= 19;
  r.detail = std::to_string(good) + "/20 seeds with every |z| < 3 (need 19); worst max |z| = " + fmt(worst, 3) +
             " (N = 5000, T = 2 per seed)";
  return r;
}

inline CriterionResult c5(const Context& ctx, Shared& sh) {
  CriterionResult r{5, "gradient vs oracle", false, {}, 0.0};
  auto c = ctx.config(kOddWellTheta01Toml, "odd_well_theta01.toml");
  c.threads = 1;
  const auto rec = ctx.run("grad", c);
  sh.odd_well_csv = cli::render_csv(rec);
  const auto& s = find(rec, "grad_surface");
  const auto& b = find(rec, "grad_bulk");
  const auto o = ctx.run("oracle", ctx.config(kOddWellTheta01Toml, "odd_well_theta01.toml"));
  const auto& fd = find(o, "oracle_fd_gradient");
  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < s.value.size(); ++i) {
    const double tol = std::max(0.1 * std::abs(fd.value[i]), 3.0 * s.std_error[i]);
    const bool oi = std::abs(s.value[i] - fd.value[i]) <= tol;
    const bool ci = std::abs(s.value[i] - b.value[i]) <= 3.0 * std::hypot(s.std_error[i], b.std_error[i]);
    ok = ok && oi && ci;
    d << "k=" << i + 1 << ": surface " << fmt(s.value[i], 4) << " +- " << fmt(s.std_error[i], 2) << ", bulk " << fmt(b.value[i], 4)
      << " +- " << fmt(b.std_error[i], 2) << ", FD " << fmt(fd.value[i], 4) << (oi ? "" : " [oracle FAIL]") << (ci ? "" : " [bulk FAIL]")
      << "; ";
  }
  r.passed = ok;
  r.detail = d.str() + "FD with h = 0.15, delta = 0.02, linear ghost boundary";
  return r;
}

inline CriterionResult c6(const Context& ctx, Shared&) {
  CriterionResult r{6, "symmetry diagnostic", false, {}, 0.0};
  const auto a = ctx.run("symmetry", ctx.config(kOddWellTheta0Toml, "odd_well_theta0.toml"));
  const auto b = ctx.run("symmetry", ctx.config(kOddWellTheta03Toml, "odd_well_theta03.toml"));
  const double za = find(a, "symmetry_max_abs_z").value[0], zb = find(b, "symmetry_max_abs_z").value[0];
  std::size_t rows = 0;
  for (const auto& x : a)
    if (x.quantity.rfind("symmetry[", 0) == 0) ++rows;
  r.passed = za < 3.5 && zb > 5.0 && rows == 8;
  r.detail = "theta=(0,0): max |z| = " + fmt(za, 3) + " < 3.5; theta=(0.3,0), N=1e5: max |z| = " + fmt(zb, 3) + " > 5; battery of " +
             std::to_string(rows) + " functions";
  return r;
}

inline CriterionResult c7(const Context&, Shared&) {
  CriterionResult r{7, "oracle convergence", false, {}, 0.0};
  using std::numbers::pi;
  auto interval = models::make_model("interval");
  auto solve_interval = [&](double h) {
    const auto g = oracle::GridSpec::uniform(interval.model->box(), h);
    return oracle::solve_dirichlet_groundstate(*interval.model, g, oracle::OracleDomain::nodal(interval.family, interval.default_theta))
               .energy -
           pi * pi / 2.0;
  };
  const Model square("square", 2, [](const Configuration&) { return 0.0; }, Box::cube(2, 0.0, 1.0));
  auto solve_square = [&](double h) {
    return oracle::solve_dirichlet_groundstate(square, oracle::GridSpec::uniform(square.box(), h), oracle::OracleDomain::box()).energy -
           pi * pi;
  };
  const double i1 = solve_interval(0.01), i2 = solve_interval(0.005);
  const double s1 = solve_square(0.02), s2 = solve_square(0.01);
  const double ri = i1 / i2, rs = s1 / s2;
  const auto in = [](double v) { return v >= 3.2 && v <= 4.8; };
  r.passed = in(ri) && in(rs) && std::abs(i2) < 1e-3;
  r.detail = "interval error ratio " + fmt(ri, 4) + ", square error ratio " + fmt(rs, 4) + " (need [3.2, 4.8]); interval h=0.005 error " +
             fmt(std::abs(i2), 3) + " < 1e-3";
  return r;
}

inline CriterionResult c8(const Context& ctx, Shared&) {
  CriterionResult r{8, "NMC end-to-end", false, {}, 0.0};
  const cli::Session s(ctx.config(kOddWellStartToml, "odd_well_start02.toml"), ctx.log);
  const auto trace = cli::optimize(s);
  const auto& last = trace.steps.back();
  const double th = norm(last.theta);
  const double e = last.energy.scalar(), se = last.energy.scalar_error();
  bool monotone = true;
  double worst = -INFINITY;
  for (std::size_t k = 1; k < trace.steps.size(); ++k) {
    const auto& a = trace.steps[k - 1].energy;
    const auto& b = trace.steps[k].energy;
    const double sig = std::hypot(a.scalar_error(), b.scalar_error());
    const double rise = b.scalar() - a.scalar();
    worst = std::max(worst, sig > 0 ? rise / sig : (rise > 0 ? INFINITY : 0.0));
    if (rise > 2.0 * sig) monotone = false;
  }
  const bool near = std::abs(e - 4.0) <= 2.0 * se;
  r.passed = th < 0.05 && near && monotone && trace.steps.size() == 16;
  r.detail = "|theta_15| = " + fmt(th, 3) + " < 0.05; E_15 = " + fmt(e, 8) + " +- " + fmt(se, 3) + " (|E-4|/sigma = " +
             fmt(se > 0 ? std::abs(e - 4.0) / se : 0.0, 3) + " <= 2); largest step rise " + fmt(worst, 3) + " sigma <= 2; " +
             std::to_string(trace.total_halvings) + " step halvings";
  return r;
}

inline CriterionResult c9(const Context& ctx, Shared& sh) {
  CriterionResult r{9, "determinism", false, {}, 0.0};
  if (sh.interval_csv.empty() || sh.odd_well_csv.empty()) {
    Shared tmp;
    c1(ctx, tmp);
    c5(ctx, tmp);
    sh = tmp;
  }
  bool ok = true;
  std::ostringstream d;
  for (int t : {4, 8}) {
    auto a = ctx.config(kIntervalToml, "interval.toml");
    a.threads = t;
    const bool ia = cli::render_csv(ctx.run("dmc", a)) == sh.interval_csv;
    auto b = ctx.config(kOddWellTheta01Toml, "odd_well_theta01.toml");
    b.threads = t;
    const bool ib = cli::render_csv(ctx.run("grad", b)) == sh.odd_well_csv;
    ok = ok && ia && ib;
    d << t << " threads: interval " << (ia ? "identical" : "DIFFERS") << ", odd well " << (ib ? "identical" : "DIFFERS") << "; ";
  }
  r.passed = ok;
  r.detail = d.str() + "reference at 1 thread";
  return r;
}

inline CriterionResult c10(const Context& ctx, Shared&) {
  CriterionResult r{10, "zero-variance controls", false, {}, 0.0};
  const auto v = ctx.run("vmc", ctx.config(kTwoFermionToml, "two_fermion.toml"));
  const double e = find(v, "vmc_energy").value[0];
  const double var = find(v, "vmc_local_energy_variance").value[0];
  bool zero = true;
  std::ostringstream d;
  for (const char* th : {"[0.0]", "[0.05]"}) {
    const auto g = ctx.run("grad", ctx.config(kTwoFermionToml, "two_fermion.toml", {std::string("model.theta=") + th}));
    const auto& s = find(g, "grad_surface");
    for (double x : s.value) zero = zero && x == 0.0;
    d << "surface gradient at theta=" << th << " = " << fmt(s.value[0]) << "; ";
  }
  r.passed = std::abs(e - 2.0) < 1e-12 && var < 1e-16 && zero;
  r.detail = "VMC E = " + cli::format_number(e) + ", local-energy variance = " + cli::format_number(var) + "; " + d.str() +
             "exactness: |E-2| < 1e-12, variance < 1e-16, gradient == 0";
  return r;
}

}  // namespace detail

inline const std::vector<std::pair<int, std::function<CriterionResult(const detail::Context&, detail::Shared&)>>>& criteria() {
  static const std::vector<std::pair<int, std::function<CriterionResult(const detail::Context&, detail::Shared&)>>> list{
      {1, detail::c1}, {2, detail::c2}, {3, detail::c3}, {4, detail::c4}, {5, detail::c5},
      {6, detail::c6}, {7, detail::c7}, {8, detail::c8}, {9, detail::c9}, {10, detail::c10}};
  return list;
}

//! Runs the selected criteria, printing one PASS/FAIL line each as it completes.
inline std::vector<CriterionResult> run_acceptance(const Options& options, std::ostream& out) {
  detail::NullBuffer null_buf;
  std::ostream null_stream(&null_buf);
  const detail::Context ctx{options, options.log ? *options.log : null_stream};
  detail::Shared shared;
  std::vector<CriterionResult> results;
  for (const auto& [id, fn] : criteria()) {
    if (!options.only.empty() && !options.only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = fn(ctx, shared);
    } catch (const std::exception& e) {
      r.id = id;
      r.title = "criterion " + std::to_string(id);
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << (r.passed ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << "  " << std::left << std::setw(24) << r.title << std::right
        << r.detail << "  (" << detail::fmt(r.seconds, 3) << " s)" << std::endl;
    results.push_back(r);
  }
  return results;
}

}  // namespace nodalmc::acceptance
