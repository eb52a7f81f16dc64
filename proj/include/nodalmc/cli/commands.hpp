#pragma once

#include <chrono>
#include <iomanip>
#include <ostream>

#include "nodalmc/cli/config.hpp"
#include "nodalmc/cli/output.hpp"
#include "nodalmc/estimators.hpp"
#include "nodalmc/oracle.hpp"

namespace nodalmc::cli {

class Session {
 public:
  Session(RunConfig config, std::ostream& log)
      : config_(std::move(config)), resolved_(resolve(config_)), digest_(config_digest(config_)), log_(log),
        start_(std::chrono::steady_clock::now()) {}

  const RunConfig& config() const { return config_; }
  const ResolvedRun& resolved() const { return resolved_; }
  const models::ModelCatalogEntry& entry() const { return resolved_.entry; }
  const Model& model() const { return *resolved_.entry.model; }
  const TrialFamily& family() const { return *resolved_.entry.family; }
  std::shared_ptr<const TrialFamily> family_ptr() const { return resolved_.entry.family; }
  const Parameters& theta() const { return resolved_.theta; }
  const std::string& digest() const { return digest_; }
  std::ostream& log() const { return log_; }

  ResultRecord stamp(ResultRecord r) const {
    r.seed = config_.seed;
    r.config_digest = digest_;
    r.walltime_s = config_.output.walltime ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;
    return r;
  }
  ResultRecord record(std::string quantity, const EstimateWithError& e) const { return stamp(make_record(std::move(quantity), e)); }
  ResultRecord record(std::string quantity, double v, double err = 0.0, double n_eff = 0.0) const {
    return stamp(make_record(std::move(quantity), v, err, n_eff));
  }

 private:
  RunConfig config_;
  ResolvedRun resolved_;
  std::string digest_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// shared propagation

struct FixedNodeRun {
  diffusion::Ensemble ensemble;
  EstimateWithError energy;
  double lambda = 0.0;
  std::optional<diffusion::HittingRun> hitting;
};

inline constexpr std::uint64_t kPilotSeedOffset = 0x9E3779B97F4A7C15ull;

inline void check_lambda_admissible(double lambda, const EstimateWithError& energy) {
  const double gap = energy.scalar() - lambda, err = energy.scalar_error();
  if (!(gap > 3.0 * err) || !(gap > 0))
    throw StatisticalError("lambda = " + format_number(lambda) + " is not admissibly below E = " + format_number(energy.scalar()) +
                           " +- " + format_number(err) + " (z = " + format_number(err > 0 ? gap / err : 0.0) + ")");
}

//! λ = 0 for potentials bounded below by zero, otherwise a pilot estimate minus one.
inline double choose_lambda(const Session& s, const Parameters& theta, std::uint64_t seed) {
  const auto& r = s.resolved();
  if (!r.lambda_auto) return r.propagation.lambda;
  const double lb = s.model().potential_lower_bound();
  if (lb >= 0) return 0.0;
  auto pilot = r.propagation;
  pilot.lambda = std::isfinite(lb) ? lb : 0.0;
  const std::size_t n = std::max<std::size_t>(500, r.walkers / 4);
  const auto ens = diffusion::propagate_ensemble(s.model(), s.family(), theta, pilot, n, seed + kPilotSeedOffset);
  const auto e = estimators::estimate_energy_extinction(ens);
  s.log() << "pilot energy " << format_number(e.scalar()) << " +- " << format_number(e.scalar_error()) << "; lambda set to E - 1\n";
  return e.scalar() - 1.0;
}

inline FixedNodeRun fixed_node_run(const Session& s, const Parameters& theta, std::uint64_t seed, bool with_hitting,
                                   std::optional<double> lambda = std::nullopt) {
  FixedNodeRun out;
  auto pc = s.resolved().propagation;
  out.lambda = lambda ? *lambda : choose_lambda(s, theta, seed);
  pc.lambda = out.lambda;
  out.ensemble = diffusion::propagate_ensemble(s.model(), s.family(), theta, pc, s.resolved().walkers, seed);
  out.energy = estimators::estimate_energy_extinction(out.ensemble, pc.burn_in);
  if (with_hitting) {
    check_lambda_admissible(out.lambda, out.energy);
    out.hitting = diffusion::continue_to_exit(out.ensemble, s.model(), s.family(), theta, pc, s.config().propagation.max_exit_time, seed);
  }
  return out;
}

inline EstimateWithError stack(const std::vector<EstimateWithError>& parts) {
  EstimateWithError e;
  const std::size_t p = parts.size();
  e.covariance.assign(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    e.value.push_back(parts[i].scalar());
    e.std_error.push_back(parts[i].scalar_error());
    e.covariance[i * p + i] = parts[i].scalar_error() * parts[i].scalar_error();
    e.n_effective = parts[i].n_effective;
    for (const auto& w : parts[i].warnings) e.warnings.push_back(w);
  }
  if (p) e.method = parts[0].method;
  return e;
}

inline void log_estimate(std::ostream& os, const std::string& name, const EstimateWithError& e) {
  os << std::left << std::setw(22) << name;
  for (std::size_t i = 0; i < e.size(); ++i) os << ' ' << format_number(e.value[i]) << " +- " << format_number(e.std_error[i]);
  os << '\n';
  for (const auto& w : e.warnings) os << "  warning: " << w << '\n';
}

// ---------------------------------------------------------------------------
// subcommands

inline std::vector<ResultRecord> run_vmc(const Session& s) {
  const auto& c = s.config();
  const auto e = estimators::estimate_vmc_energy(s.model(), s.family(), s.theta(), c.vmc.steps, c.vmc.proposal_scale, c.seed);
  log_estimate(s.log(), "vmc_energy", e);
  std::vector<ResultRecord> out{s.record("vmc_energy", e)};
  out.push_back(s.record("vmc_local_energy_variance", std::stod(e.metadata.at("sample_variance"))));
  out.push_back(s.record("vmc_acceptance", std::stod(e.metadata.at("acceptance"))));
  return out;
}

inline std::vector<ResultRecord> run_dmc(const Session& s) {
  const auto run = fixed_node_run(s, s.theta(), s.config().seed, false);
  auto energy = run.energy;
  energy.metadata["resamples"] = std::to_string(run.ensemble.counters.resamples);
  energy.metadata["exits"] = std::to_string(run.ensemble.counters.exits);
  energy.metadata["clamped_weights"] = std::to_string(run.ensemble.counters.clamped_weights);
  energy.metadata["mode"] = run.ensemble.mode == diffusion::PropagationMode::drifted ? "drifted" : "plain";
  log_estimate(s.log(), "energy", energy);
  const auto eta = estimators::estimate_eta(run.ensemble);
  std::vector<EstimateWithError> mean, second;
  for (std::size_t a = 0; a < s.model().dimension(); ++a) {
    mean.push_back(eta.average([a](const Configuration& x) { return x[a]; }));
    second.push_back(eta.average([a](const Configuration& x) { return x[a] * x[a]; }));
  }
  auto m = stack(mean), m2 = stack(second);
  const std::string density = run.ensemble.mode == diffusion::PropagationMode::drifted ? "psi_fn*psi_trial" : "psi_fn";
  m.metadata["density"] = m2.metadata["density"] = density;
  log_estimate(s.log(), "eta_mean", m);
  log_estimate(s.log(), "eta_second_moment", m2);
  std::vector<ResultRecord> out{s.record("energy", energy), s.record("eta_mean", m), s.record("eta_second_moment", m2)};
  if (auto ref = s.entry().exact_fixed_node_energy(s.theta())) out.push_back(s.record("reference_energy", *ref));
  return out;
}

inline std::vector<ResultRecord> run_mu(const Session& s) {
  const auto run = fixed_node_run(s, s.theta(), s.config().seed, true);
  const auto fs = functionals_or_default(s.config().mu.functionals, s.model().dimension());
  const auto mu = estimators::estimate_mu(*run.hitting, fs);
  log_estimate(s.log(), "energy", run.energy);
  log_estimate(s.log(), "mu_mass", mu.total_mass);
  std::vector<ResultRecord> out{s.record("energy", run.energy), s.record("mu_mass", mu.total_mass)};
  for (std::size_t k = 0; k < fs.size(); ++k) {
    log_estimate(s.log(), "mu[" + fs[k].name + "]", mu.functionals[k]);
    out.push_back(s.record("mu[" + fs[k].name + "]", mu.functionals[k]));
  }
  out.push_back(s.record("mu_censored_mass", mu.censored_mass));
  out.push_back(s.record("lambda", run.lambda));
  for (const auto& w : mu.warnings) s.log() << "warning: " << w << '\n';
  return out;
}

struct GradientRun {
  FixedNodeRun run;
  EstimateWithError surface;
  EstimateWithError bulk;
};

inline GradientRun gradient_run(const Session& s, const Parameters& theta, std::uint64_t seed, std::optional<double> lambda = std::nullopt) {
  GradientRun g;
  g.run = fixed_node_run(s, theta, seed, true, lambda);
  const auto eta = estimators::eta_from_run(*g.run.hitting);
  g.surface = estimators::estimate_fn_gradient_surface(*g.run.hitting, eta, s.family(), theta, g.run.energy, g.run.lambda);
  g.bulk = estimators::estimate_fn_gradient_bulk(eta, s.model(), s.family(), theta, g.run.energy);
  return g;
}

inline std::vector<double> consistency_z(const EstimateWithError& a, const EstimateWithError& b) {
  std::vector<double> z;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value[i] - b.value[i];
    const double e = std::hypot(a.std_error[i], b.std_error[i]);
    z.push_back(e > 0 ? d / e : (d == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d)));
  }
  return z;
}

inline std::vector<ResultRecord> run_grad(const Session& s) {
  if (!s.model().group())
    s.log() << "warning: '" << s.model().name()
            << "' has no symmetry group; the fixed-node forms count both sides of the node and read twice the "
               "one-sided Dirichlet derivative (see the shape command)\n";
  const auto g = gradient_run(s, s.theta(), s.config().seed);
  log_estimate(s.log(), "energy", g.run.energy);
  log_estimate(s.log(), "grad_surface", g.surface);
  log_estimate(s.log(), "grad_bulk", g.bulk);
  const auto z = consistency_z(g.surface, g.bulk);
  EstimateWithError ze;
  ze.value = z;
  ze.std_error.assign(z.size(), 0.0);
  ze.method = "(surface - bulk) / hypot(stderr)";
  s.log() << "surface z:";
  for (std::size_t i = 0; i < g.surface.size(); ++i) s.log() << ' ' << format_number(g.surface.z(i));
  s.log() << "\nconsistency z:";
  for (double v : z) s.log() << ' ' << format_number(v);
  s.log() << '\n';
  return {s.record("energy", g.run.energy), s.record("grad_surface", g.surface), s.record("grad_bulk", g.bulk),
          s.record("grad_consistency_z", ze)};
}

inline std::vector<ResultRecord> run_symmetry(const Session& s) {
  if (!s.model().group()) throw UsageError("model '" + s.model().name() + "' has no symmetry group");
  const auto run = fixed_node_run(s, s.theta(), s.config().seed, true);
  const auto battery = estimators::default_symmetry_battery(s.family_ptr(), s.theta(), s.entry().odd_monomials);
  const auto rep = estimators::symmetry_diagnostic(*run.hitting, *s.model().group(), battery);
  s.log() << std::left << std::setw(18) << "function" << std::right << std::setw(16) << "mean" << std::setw(16) << "stderr"
          << std::setw(10) << "z" << '\n';
  std::vector<ResultRecord> out;
  for (const auto& r : rep.rows) {
    s.log() << std::left << std::setw(18) << r.name << std::right << std::setw(16) << std::setprecision(6) << r.mean << std::setw(16)
            << r.std_error << std::setw(10) << std::setprecision(3) << r.z << (r.degenerate ? "  (vanishes on samples)" : "") << '\n';
    auto rec = s.record("symmetry[" + r.name + "]", r.mean, r.std_error, rep.n_effective);
    rec.metadata["z"] = format_number(r.z);
    out.push_back(rec);
  }
  s.log() << std::setprecision(6) << "max |z| = " << rep.max_abs_z() << '\n';
  for (const auto& w : rep.warnings) s.log() << "warning: " << w << '\n';
  out.push_back(s.record("symmetry_max_abs_z", rep.max_abs_z(), 0.0, rep.n_effective));
  return out;
}

inline std::vector<ResultRecord> run_shape(const Session& s) {
  const auto run = fixed_node_run(s, s.theta(), s.config().seed, true);
  const auto eta = estimators::eta_from_run(*run.hitting);
  const auto psi = estimators::trial_field(s.family_ptr(), s.theta());
  estimators::BoundaryField field;
  if (s.config().shape.velocity == "family") {
    field = estimators::nodal_boundary_field(s.family_ptr(), s.theta());
  } else {
    if (s.model().dimension() != 1) throw ConfigError(s.config().source + ": shape.velocity = \"endpoints\" needs a 1D model");
    const double left = s.config().shape.left, right = s.config().shape.right;
    auto normal = [fam = s.family_ptr(), th = s.theta()](const Configuration& x) {
      const double g = fam->evaluate(th, x, quantity::value | quantity::gradient).gradient[0];
      if (g == 0.0) throw DegenerateNodeError("no normal at a critical endpoint");
      return Configuration{g > 0 ? -1.0 : 1.0};
    };
    field.normal = normal;
    field.velocity = [normal, left, right](const Configuration& x) { return Parameters{normal(x)[0] > 0 ? right : left}; };
  }
  const auto e = estimators::estimate_shape_derivative_dirichlet(psi, field, *run.hitting, eta, run.energy, run.lambda);
  log_estimate(s.log(), "energy", run.energy);
  log_estimate(s.log(), "shape_derivative", e);
  return {s.record("energy", run.energy), s.record("shape_derivative", e)};
}

inline oracle::BoundaryTreatment treatment_of(const std::string& name) {
  return name == "linear_ghost" ? oracle::BoundaryTreatment::linear_ghost : oracle::BoundaryTreatment::staircase;
}

inline std::vector<ResultRecord> run_oracle(const Session& s) {
  const auto& oc = s.config().oracle;
  const double h = oc.spacing > 0 ? oc.spacing : s.entry().grid_spacing;
  const auto grid = oracle::GridSpec::uniform(s.model().box(), h);
  const auto treatment = treatment_of(oc.boundary);
  const bool nodal = oc.domain == "nodal";
  const auto domain = nodal ? oracle::OracleDomain::nodal(s.family_ptr(), s.theta(), treatment) : oracle::OracleDomain::box(treatment);
  oracle::OracleOptions opts;
  opts.threads = s.config().threads;
  const auto sol = oracle::solve_dirichlet_groundstate(s.model(), grid, domain, opts);
  auto e = EstimateWithError::scalar_estimate(sol.energy, 0.0, 0.0, "grid_inverse_iteration");
  e.metadata["spacing"] = format_number(h);
  e.metadata["residual"] = format_number(sol.residual);
  e.metadata["converged"] = sol.converged ? "true" : "false";
  e.metadata["iterations"] = std::to_string(sol.iterations);
  e.metadata["components"] = std::to_string(sol.components);
  e.metadata["boundary"] = oc.boundary;
  e.warnings = sol.warnings;
  log_estimate(s.log(), "oracle_energy", e);
  std::vector<ResultRecord> out{s.record("oracle_energy", e), s.record("oracle_residual", sol.residual)};
  if (nodal && oc.fd_gradient && s.family().parameter_count() > 0) {
    const auto fd = oracle::finite_difference_theta_gradient(s.model(), s.family_ptr(), s.theta(), grid, oc.fd_delta, treatment, opts);
    EstimateWithError g;
    g.value = fd.gradient;
    g.std_error.assign(fd.gradient.size(), 0.0);
    g.method = "central_difference";
    g.metadata["delta"] = format_number(oc.fd_delta);
    g.warnings = fd.warnings;
    log_estimate(s.log(), "oracle_fd_gradient", g);
    out.push_back(s.record("oracle_fd_gradient", g));
  }
  if (oc.lambda) {
    for (const auto& f : functionals_or_default(oc.functionals, s.model().dimension())) {
      const auto ef = oracle::solve_exit_functional(s.model(), grid, domain, *oc.lambda, f.f, &sol, opts);
      s.log() << "oracle_mu[" << f.name << "] " << format_number(ef.functional) << '\n';
      out.push_back(s.record("oracle_mu[" + f.name + "]", ef.functional));
    }
  }
  if (auto ref = s.entry().exact_fixed_node_energy(s.theta())) out.push_back(s.record("reference_energy", *ref));
  if (!oc.dump.empty()) oracle::write_grid_solution(sol, oc.dump);
  return out;
}

// ---------------------------------------------------------------------------
// NMC loop

struct OptimizeStep {
  std::size_t iteration = 0;
  Parameters theta;
  EstimateWithError energy;
  EstimateWithError gradient;
  double step = 0.0;        //!< step size used to reach this point
  std::size_t halvings = 0;  //!< rejected proposals before this point was accepted
  bool stalled = false;      //!< every proposal was rejected; θ kept
};

struct OptimizeTrace {
  std::vector<OptimizeStep> steps;
  double lambda = 0.0;
  std::size_t total_halvings = 0;
};

inline OptimizeTrace optimize(const Session& s) {
  const auto& oc = s.config().optimize;
  const std::size_t p = s.family().parameter_count();
  if (p == 0) throw UsageError("family has no parameters to optimize");
  std::uint64_t evaluations = 0;
  auto next_seed = [&] { return s.config().seed + 1000003ull * evaluations++; };

  OptimizeTrace trace;
  trace.lambda = choose_lambda(s, s.theta(), s.config().seed);
  auto evaluate = [&](const Parameters& th) {
    auto g = gradient_run(s, th, next_seed(), trace.lambda);
    return std::pair{g.run.energy, oc.gradient == "bulk" ? g.bulk : g.surface};
  };

  OptimizeStep cur;
  cur.theta = s.theta();
  std::tie(cur.energy, cur.gradient) = evaluate(cur.theta);
  trace.steps.push_back(cur);
  double gamma = oc.step;
  auto show = [&](const OptimizeStep& st) {
    s.log() << "iter " << std::setw(2) << st.iteration << "  theta";
    for (double v : st.theta) s.log() << ' ' << format_number(v);
    s.log() << "  E " << format_number(st.energy.scalar()) << " +- " << format_number(st.energy.scalar_error()) << "  grad";
    for (std::size_t i = 0; i < st.gradient.size(); ++i) s.log() << ' ' << format_number(st.gradient.value[i]);
    s.log() << (st.halvings ? "  halvings " + std::to_string(st.halvings) : "") << (st.stalled ? "  stalled" : "") << '\n';
  };
  show(cur);

  for (std::size_t k = 1; k <= oc.iterations; ++k) {
    OptimizeStep next;
    next.iteration = k;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt <= oc.max_halvings && !accepted; ++attempt) {
      Parameters cand = cur.theta;
      for (std::size_t i = 0; i < p; ++i) cand[i] -= gamma * cur.gradient.value[i];
      std::string reason;
      try {
        validate_family(s.model(), s.family(), cand);
        auto [e, g] = evaluate(cand);
        const double tol = 2.0 * std::hypot(e.scalar_error(), cur.energy.scalar_error());
        if (e.scalar() - cur.energy.scalar() > tol) {
          reason = "energy rose by " + format_number(e.scalar() - cur.energy.scalar()) + " > 2 sigma";
        } else {
          next.theta = cand;
          next.energy = e;
          next.gradient = g;
          next.step = gamma;
          accepted = true;
        }
      } catch (const StatisticalError& err) {
        reason = err.what();
      } catch (const ExtinctionError& err) {
        reason = err.what();
      } catch (const UsageError& err) {
        reason = err.what();
      }
      if (!accepted) {
        ++next.halvings;
        ++trace.total_halvings;
        s.log() << "  step " << format_number(gamma) << " rejected (" << reason << "); halving\n";
        gamma *= 0.5;
      }
    }
    if (!accepted) {
      next.theta = cur.theta;
      std::tie(next.energy, next.gradient) = evaluate(cur.theta);
      next.step = 0.0;
      next.stalled = true;
    }
    cur = next;
    trace.steps.push_back(cur);
    show(cur);
  }
  return trace;
}

inline std::vector<ResultRecord> run_optimize(const Session& s) {
  const auto trace = optimize(s);
  std::vector<ResultRecord> out;
  for (const auto& st : trace.steps) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "iter%02zu.", st.iteration);
    EstimateWithError th;
    th.value = st.theta.to_vector();
    th.std_error.assign(th.value.size(), 0.0);
    out.push_back(s.record(std::string(tag) + "theta", th));
    out.push_back(s.record(std::string(tag) + "energy", st.energy));
    out.push_back(s.record(std::string(tag) + "gradient", st.gradient));
    auto step = s.record(std::string(tag) + "step", st.step);
    step.metadata["halvings"] = std::to_string(st.halvings);
    if (st.stalled) step.metadata["stalled"] = "true";
    out.push_back(step);
  }
  EstimateWithError th;
  th.value = trace.steps.back().theta.to_vector();
  th.std_error.assign(th.value.size(), 0.0);
  out.push_back(s.record("theta_final", th));
  out.push_back(s.record("energy_final", trace.steps.back().energy));
  out.push_back(s.record("step_halvings", static_cast<double>(trace.total_halvings)));
  return out;
}

// ---------------------------------------------------------------------------
// catalog listing

inline nlohmann::ordered_json describe_model(const models::ModelCatalogEntry& e) {
  nlohmann::ordered_json j;
  j["name"] = e.name;
  j["description"] = e.description;
  j["dimension"] = e.model->dimension();
  j["parameters"] = e.parameters;
  j["trial_family"] = e.family->name();
  j["theta_dimension"] = e.family->parameter_count();
  j["default_theta"] = e.default_theta.to_vector();
  j["symmetry_group_order"] = e.model->group() ? e.model->group()->size() : 1;
  j["box"] = {{"lower", e.model->box().lower.to_vector()}, {"upper", e.model->box().upper.to_vector()}};
  j["potential_lower_bound"] = e.model->potential_lower_bound();
  nlohmann::ordered_json refs = nlohmann::ordered_json::array();
  for (const auto& r : e.references) refs.push_back({{"name", r.name}, {"value", r.value}, {"provenance", r.provenance}});
  j["references"] = refs;
  std::vector<std::string> mono;
  for (const auto& m : e.odd_monomials) mono.push_back(m.name);
  j["odd_monomials"] = mono;
  j["propagation_defaults"] = {{"walkers", e.propagation.walkers},
                               {"dt", e.propagation.dt},
                               {"total_time", e.propagation.total_time},
                               {"initial", e.propagation.init}};
  j["grid_spacing"] = e.grid_spacing;
  j["experimental"] = e.experimental;
  return j;
}

inline std::string list_models_json() {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& name : models::catalog_names()) {
    const auto e = models::make_model(name);
    arr.push_back({{"name", name}, {"dimension", e.model->dimension()}, {"description", e.description}, {"experimental", e.experimental}});
  }
  return arr.dump(2) + "\n";
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"vmc", "dmc", "mu", "grad", "symmetry", "shape", "oracle", "optimize"};
  return names;
}

inline std::vector<ResultRecord> run_command(const std::string& name, const RunConfig& config, std::ostream& log) {
  const Session s(config, log);
  if (name == "vmc") return run_vmc(s);
  if (name == "dmc") return run_dmc(s);
  if (name == "mu") return run_mu(s);
  if (name == "grad") return run_grad(s);
  if (name == "symmetry") return run_symmetry(s);
  if (name == "shape") return run_shape(s);
  if (name == "oracle") return run_oracle(s);
  if (name == "optimize") return run_optimize(s);
  throw UsageError("unknown subcommand '" + name + "'");
}

}  // namespace nodalmc::cli
