#pragma once

#include "nodalmc/diffusion.hpp"
#include "nodalmc/statistics.hpp"

namespace nodalmc::estimators {

using diffusion::Ensemble;
using diffusion::HittingRun;
using diffusion::HittingSample;
using diffusion::PropagationMode;

inline constexpr std::size_t kJackknifeBlocks = diffusion::kWalkerGroups;

struct WeightedSample {
  std::vector<Configuration> points;
  std::vector<double> weights;  //!< normalized to unit sum
  std::vector<std::string> warnings;

  std::size_t size() const { return points.size(); }

  //! Weighted mean of φ with a blocking error over walker order.
  EstimateWithError average(const std::function<double(const Configuration&)>& phi) const {
    const std::size_t n = points.size();
    std::vector<double> f(n);
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = phi(points[i]);
      m += weights[i] * f[i];
    }
    double err = 0.0;
    bool plateau = true;
    if (n >= 16) {
      std::vector<double> z(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = static_cast<double>(n) * weights[i] * (f[i] - m);
      const auto b = stats::blocking_error(z);
      err = b.std_error;
      plateau = b.plateau;
    }
    auto e = EstimateWithError::scalar_estimate(m, err, stats::kish_effective_size(weights), "weighted_mean_blocking");
    if (!plateau) e.warnings.push_back("blocking found no plateau");
    e.warnings.insert(e.warnings.end(), warnings.begin(), warnings.end());
    return e;
  }
};

namespace detail {

inline WeightedSample normalized_sample(std::vector<Configuration> points, const std::vector<double>& log_w) {
  WeightedSample s;
  s.points = std::move(points);
  const double mx = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  s.weights.resize(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) total += (s.weights[i] = std::exp(log_w[i] - mx));
  for (auto& w : s.weights) w /= total;
  if (s.points.size() < 100) s.warnings.push_back("fewer than 100 alive walkers");
  return s;
}

}  // namespace detail

//! Alive walkers with their normalized weights: density ∝ ψ* (plain) or ψ*ψ^I (drifted).
inline WeightedSample estimate_eta(const Ensemble& ensemble) {
  std::vector<Configuration> pts;
  std::vector<double> lw;
  for (const auto& w : ensemble.walkers)
    if (w.alive()) {
      pts.push_back(w.position);
      lw.push_back(w.log_weight);
    }
  if (pts.empty()) throw ExtinctionError("no alive walkers");
  return detail::normalized_sample(std::move(pts), lw);
}

//! Same sample reweighted to the plain fixed-node density ∝ ψ^FN, whatever the propagation mode.
inline WeightedSample estimate_eta_fixed_node(const Ensemble& ensemble, const TrialFamily& family, const Parameters& theta) {
  std::vector<std::size_t> alive;
  const auto lw = diffusion::fixed_node_log_weights(ensemble, family, theta, alive);
  if (alive.empty()) throw ExtinctionError("no alive walkers");
  std::vector<Configuration> pts;
  for (auto i : alive) pts.push_back(ensemble.walkers[i].position);
  return detail::normalized_sample(std::move(pts), lw);
}

//! The η sample that shares walkers with a hitting run.
inline WeightedSample eta_from_run(const HittingRun& run) {
  WeightedSample s;
  s.points = run.start_points;
  const double total = std::accumulate(run.start_weights.begin(), run.start_weights.end(), 0.0);
  for (double w : run.start_weights) s.weights.push_back(w / total);
  if (s.points.size() < 100) s.warnings.push_back("fewer than 100 alive walkers");
  return s;
}

//! E = λ − slope of log Z(t) over the window [start, T]; jackknife over contiguous time blocks.
inline EstimateWithError estimate_energy_extinction(const Ensemble& ensemble, double window_start = -1.0) {
  const auto& h = ensemble.history;
  if (window_start < 0) window_start = 0.5 * ensemble.time;
  const double eps = 1e-12 * std::max(1.0, ensemble.time);
  std::vector<std::size_t> rec;
  std::vector<double> before(h.size(), 0.0);  // cumulative log multiplier up to the previous record
  double acc = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    before[k] = acc;
    acc += h[k].log_multiplier;
    if (h[k].time >= window_start - eps) rec.push_back(k);
  }
  const std::size_t m = rec.size();
  if (m < 10) throw UsageError("energy fit window holds " + std::to_string(m) + " records; need at least 10");
  double tbar = 0.0;
  for (auto k : rec) tbar += h[k].time / static_cast<double>(m);
  double stt = 0.0;
  for (auto k : rec) stt += (h[k].time - tbar) * (h[k].time - tbar);
  auto slope = [&](auto&& log_mass) {
    double sxy = 0.0;
    for (auto k : rec) sxy += (h[k].time - tbar) * log_mass(k);
    return sxy / stt;
  };
  const double lambda = ensemble.lambda;
  const double value = lambda - slope([&](std::size_t k) { return before[k] + h[k].log_multiplier; });

  // delete-one-group jackknife: groups resample independently, so each replicate drops a group's whole history
  const auto& edges = ensemble.group_edges;
  const std::size_t groups = edges.empty() ? 0 : edges.size() - 1;
  double err = 0.0;
  if (groups >= 2) {
    std::vector<double> reps(groups);
    for (std::size_t drop = 0; drop < groups; ++drop) {
      reps[drop] = lambda - slope([&](std::size_t k) {
        const auto& g = h[k].group_log_mass;
        if (g.empty()) return before[k] + h[k].log_multiplier;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < groups; ++b)
          if (b != drop) mx = std::max(mx, g[b]);
        double s = 0.0, slots = 0.0;
        for (std::size_t b = 0; b < groups; ++b)
          if (b != drop) {
            const auto nb = static_cast<double>(edges[b + 1] - edges[b]);
            if (std::isfinite(g[b])) s += nb * std::exp(g[b] - mx);
            slots += nb;
          }
        return before[k] + mx + std::log(s / slots);
      });
    }
    const double mean = std::accumulate(reps.begin(), reps.end(), 0.0) / static_cast<double>(groups);
    for (double r : reps) err += (r - mean) * (r - mean);
    err = std::sqrt(err * static_cast<double>(groups - 1) / static_cast<double>(groups));
  }
  auto e = EstimateWithError::scalar_estimate(value, err, static_cast<double>(ensemble.walkers.size()), "extinction_rate_fit");
  e.metadata["window_start"] = std::to_string(window_start);
  e.metadata["records"] = std::to_string(m);
  e.metadata["lambda"] = std::to_string(lambda);
  e.metadata["error"] = "delete-one jackknife over " + std::to_string(groups) + " walker groups";
  const double decay = value - lambda;
  if (decay <= 0 && (err == 0 || decay / err < -3.0))
    throw StatisticalError("weights do not decay (E - lambda = " + std::to_string(decay) + " +- " + std::to_string(err) +
                           "); lambda or the domain is misconfigured");
  return e;
}

//! Random-walk Metropolis on (ψ^I)² with the mean local energy and a blocking error.
inline EstimateWithError estimate_vmc_energy(const Model& model, const TrialFamily& family, const Parameters& theta, std::size_t n_steps,
                                             double proposal_scale, std::uint64_t seed) {
  validate_family(model, family, theta);
  if (n_steps < 16) throw UsageError("VMC needs at least 16 steps");
  if (!(proposal_scale > 0)) throw UsageError("proposal scale must be positive");
  RandomStream rng(seed, 0, 0, StreamPurpose::metropolis);
  diffusion::PropagationConfig init;
  Configuration x = diffusion::sample_initial_position(model, family, theta, init, rng);
  double psi = family.value(theta, x);
  double el = local_energy(model, family, theta, x);
  const std::size_t warmup = n_steps / 10;
  std::vector<double> series;
  series.reserve(n_steps);
  std::size_t accepted = 0, proposed = 0;
  for (std::size_t s = 0; s < warmup + n_steps; ++s) {
    Configuration y = x;
    for (auto& v : y) v += proposal_scale * rng.gaussian();
    const double py = family.value(theta, y);
    const double u = rng.uniform();
    ++proposed;
    if (u * psi * psi < py * py) {
      try {
        const double ely = local_energy(model, family, theta, y);
        x = y;
        psi = py;
        el = ely;
        ++accepted;
      } catch (const NodeProximityError&) {
      }
    }
    if (s >= warmup) series.push_back(el);
  }
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(series.size());
  const auto b = stats::blocking_error(series);
  double neff = b.std_error > 0 ? var / (b.std_error * b.std_error) : static_cast<double>(series.size());
  neff = std::min(neff, static_cast<double>(series.size()));
  auto e = EstimateWithError::scalar_estimate(mean, b.std_error, neff, "vmc_metropolis");
  const double acc = static_cast<double>(accepted) / static_cast<double>(proposed);
  e.metadata["acceptance"] = std::to_string(acc);
  std::ostringstream os;
  os.precision(17);
  os << var;
  e.metadata["sample_variance"] = os.str();
  if (acc < 0.1 || acc > 0.9) {
    const double suggest = proposal_scale * (acc < 0.1 ? 0.3 : 3.0);
    e.warnings.push_back("acceptance rate " + std::to_string(acc) + " outside [0.1, 0.9]; try proposal_scale " + std::to_string(suggest));
  }
  if (!b.plateau) e.warnings.push_back("blocking found no plateau");
  return e;
}

// ---------------------------------------------------------------------------
// hitting measure

struct MuEstimate {
  EstimateWithError total_mass;
  std::vector<EstimateWithError> functionals;
  double censored_fraction = 0.0;  //!< censored walkers over walkers
  double censored_mass = 0.0;      //!< censored weight over the denominator
  std::vector<std::string> warnings;
};

namespace detail {

// per-walker sums of w·f(x) over the (non-censored) samples of each origin, in units of Σ d
template <class F>
std::vector<std::vector<double>> per_walker_sums(const HittingRun& run, std::size_t width, F&& f) {
  const std::size_t n = run.walker_count();
  const double total = std::accumulate(run.start_weights.begin(), run.start_weights.end(), 0.0);
  std::vector<std::vector<double>> acc(n, std::vector<double>(width, 0.0));
  std::vector<double> buf(width);
  for (const auto& s : run.samples) {
    if (s.censored) continue;
    std::fill(buf.begin(), buf.end(), 0.0);
    f(s, std::span<double>(buf));
    for (std::size_t c = 0; c < width; ++c) acc[s.origin][c] += s.weight / total * buf[c];
  }
  return acc;
}

}  // namespace detail

//! ∫φ dμ = Σ wᵢφ(xᵢ) / Σ dⱼ with a delete-block jackknife over start walkers.
inline MuEstimate estimate_mu(const HittingRun& run, std::span<const NamedFunction> functionals, std::size_t blocks = kJackknifeBlocks) {
  const std::size_t n = run.walker_count();
  if (n == 0) throw UsageError("empty hitting run");
  const std::size_t q = functionals.size() + 1;
  const double total = std::accumulate(run.start_weights.begin(), run.start_weights.end(), 0.0);
  const auto acc = detail::per_walker_sums(run, q, [&](const HittingSample& s, std::span<double> out) {
    out[0] = 1.0;
    for (std::size_t k = 0; k < functionals.size(); ++k) out[k + 1] = functionals[k](s.point);
  });
  const auto sums = stats::block_sums(n, q + 1, blocks, [&](std::size_t i, std::span<double> out) {
    for (std::size_t c = 0; c < q; ++c) out[c] = acc[i][c];
    out[q] = run.start_weights[i] / total;
  });
  const auto jk = stats::jackknife_sums(sums, [&](std::span<const double> s) {
    std::vector<double> v(q);
    for (std::size_t c = 0; c < q; ++c) v[c] = s[c] / s[q];
    return v;
  });
  std::vector<double> dn(run.start_weights.begin(), run.start_weights.end());
  const double neff = stats::kish_effective_size(dn);
  MuEstimate r;
  auto pick = [&](std::size_t c, const std::string& name) {
    auto e = EstimateWithError::scalar_estimate(jk.value[c], jk.std_error[c], neff, "hitting_ratio_jackknife");
    e.metadata["functional"] = name;
    return e;
  };
  r.total_mass = pick(0, "1");
  for (std::size_t k = 0; k < functionals.size(); ++k) r.functionals.push_back(pick(k + 1, functionals[k].name));
  r.censored_fraction = static_cast<double>(run.censored_count) / static_cast<double>(n);
  r.censored_mass = run.censored_weight_fraction();
  r.total_mass.metadata["censored_mass"] = std::to_string(r.censored_mass);
  if (r.censored_fraction > 0.01)
    r.warnings.push_back("censored fraction " + std::to_string(r.censored_fraction) + " exceeds 1%; raise max_time");
  return r;
}

// ---------------------------------------------------------------------------
// fixed-node gradients

namespace detail {

inline void check_alignment(const HittingRun& run, const WeightedSample& eta) {
  if (eta.size() != run.walker_count()) throw UsageError("eta sample and hitting run do not share walkers");
}

inline void check_normalization(const stats::JackknifeResult& norm_jk, std::size_t index) {
  const double v = norm_jk.value[index], e = norm_jk.std_error[index];
  if (e > 0 ? std::abs(v / e) < 2.0 : v == 0.0)
    throw IllConditionedError("<psi>_eta is consistent with zero (z = " + std::to_string(e > 0 ? v / e : 0.0) + ")");
}

inline void add_energy_error(EstimateWithError& e, const std::vector<double>& dvalue_dE, double sigma_e) {
  const std::size_t p = e.value.size();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) e.covariance[i * p + j] += dvalue_dE[i] * dvalue_dE[j] * sigma_e * sigma_e;
    e.std_error[i] = std::sqrt(e.covariance[i * p + i]);
  }
}

}  // namespace detail

//! −2(E−λ)·∫∇θψ^I dμ / ∫ψ^I dη with jackknife covariance and the error of E added linearly.
inline EstimateWithError estimate_fn_gradient_surface(const HittingRun& mu, const WeightedSample& eta, const TrialFamily& family,
                                                      const Parameters& theta, const EstimateWithError& e_fn, double lambda,
                                                      std::size_t blocks = kJackknifeBlocks) {
  detail::check_alignment(mu, eta);
  const double energy = e_fn.scalar();
  if (!(lambda < energy)) throw UsageError("lambda must lie below the fixed-node energy");
  const std::size_t p = family.parameter_count();
  const std::size_t n = eta.size();
  const auto acc = detail::per_walker_sums(mu, 2 * p, [&](const HittingSample& s, std::span<double> out) {
    const auto t = family.evaluate(theta, s.point, quantity::value | quantity::gradient | quantity::theta_gradient);
    const double g = norm(t.gradient);
    for (std::size_t k = 0; k < p; ++k) {
      out[k] = t.theta_gradient[k];
      // r·(∇ψ·n₊) with n₊ = −∇ψ/|∇ψ|
      out[p + k] = g > 0 ? -(t.theta_gradient[k] / g) * g : 0.0;
    }
  });
  const auto sums = stats::block_sums(n, 2 * p + 1, blocks, [&](std::size_t i, std::span<double> out) {
    for (std::size_t c = 0; c < 2 * p; ++c) out[c] = acc[i][c];
    out[2 * p] = eta.weights[i] * family.value(theta, eta.points[i]);
  });
  const double scale = -2.0 * (energy - lambda);
  const auto jk = stats::jackknife_sums(sums, [&](std::span<const double> s) {
    std::vector<double> v(p + 1);
    for (std::size_t k = 0; k < p; ++k) v[k] = scale * s[k] / s[2 * p];
    v[p] = s[2 * p];
    return v;
  });
  detail::check_normalization(jk, p);
  EstimateWithError e;
  e.value.assign(jk.value.begin(), jk.value.begin() + static_cast<std::ptrdiff_t>(p));
  e.covariance.assign(p * p, 0.0);
  e.std_error.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) e.covariance[i * p + j] = jk.covariance[i * (p + 1) + j];
  std::vector<double> d(p);
  for (std::size_t k = 0; k < p; ++k) d[k] = e.value[k] / (energy - lambda);
  detail::add_energy_error(e, d, e_fn.std_error.empty() ? 0.0 : e_fn.scalar_error());
  e.n_effective = stats::kish_effective_size(eta.weights);
  e.method = "surface_hitting_jackknife";
  // same quantity through the shape velocity, kept for audit
  double a = 0.0;
  std::vector<double> audit(p, 0.0);
  for (const auto& row : sums) a += row[2 * p];
  for (std::size_t k = 0; k < p; ++k) {
    double s = 0.0;
    for (const auto& row : sums) s += row[p + k];
    audit[k] = 2.0 * (energy - lambda) * s / a;
  }
  e.metadata["shape_velocity_form"] = format_vector(audit);
  e.metadata["lambda"] = std::to_string(lambda);
  return e;
}

//! 2⟨(H−E)∇θψ^I⟩_η / ⟨ψ^I⟩_η
inline EstimateWithError estimate_fn_gradient_bulk(const WeightedSample& eta, const Model& model, const TrialFamily& family,
                                                   const Parameters& theta, const EstimateWithError& e_fn, std::size_t blocks = kJackknifeBlocks) {
  const double energy = e_fn.scalar();
  const std::size_t p = family.parameter_count();
  const std::size_t n = eta.size();
  if (n == 0) throw UsageError("empty eta sample");
  const auto sums = stats::block_sums(n, 2 * p + 1, blocks, [&](std::size_t i, std::span<double> out) {
    const auto& x = eta.points[i];
    const auto t = family.evaluate(theta, x, quantity::all);
    const double v = model.potential(x);
    const double w = eta.weights[i];
    for (std::size_t k = 0; k < p; ++k) {
      out[k] = w * (-0.5 * t.theta_laplacian[k] + (v - energy) * t.theta_gradient[k]);
      out[p + k] = w * t.theta_gradient[k];
    }
    out[2 * p] = w * t.value;
  });
  const auto jk = stats::jackknife_sums(sums, [&](std::span<const double> s) {
    std::vector<double> v(2 * p + 1);
    for (std::size_t k = 0; k < p; ++k) {
      v[k] = 2.0 * s[k] / s[2 * p];
      v[p + k] = s[p + k] / s[2 * p];
    }
    v[2 * p] = s[2 * p];
    return v;
  });
  detail::check_normalization(jk, 2 * p);
  EstimateWithError e;
  e.value.assign(jk.value.begin(), jk.value.begin() + static_cast<std::ptrdiff_t>(p));
  e.covariance.assign(p * p, 0.0);
  e.std_error.assign(p, 0.0);
  const std::size_t w = 2 * p + 1;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) e.covariance[i * p + j] = jk.covariance[i * w + j];
  std::vector<double> d(p);
  for (std::size_t k = 0; k < p; ++k) d[k] = -2.0 * jk.value[p + k];
  detail::add_energy_error(e, d, e_fn.std_error.empty() ? 0.0 : e_fn.scalar_error());
  e.n_effective = stats::kish_effective_size(eta.weights);
  e.method = "bulk_residual_jackknife";
  return e;
}

// ---------------------------------------------------------------------------
// Dirichlet shape derivative

struct ScalarField {
  std::function<double(const Configuration&)> value;
  std::function<Configuration(const Configuration&)> gradient;
};

struct BoundaryField {
  std::function<Parameters(const Configuration&)> velocity;  //!< r at a boundary point
  std::function<Configuration(const Configuration&)> normal;  //!< outward unit normal
};

inline ScalarField trial_field(std::shared_ptr<const TrialFamily> family, Parameters theta) {
  return {[family, theta](const Configuration& x) { return family->value(theta, x); },
          [family, theta](const Configuration& x) { return family->evaluate(theta, x, quantity::value | quantity::gradient).gradient; }};
}

//! r = nodal_shape_velocity and n = −∇ψ^I/|∇ψ^I|.
inline BoundaryField nodal_boundary_field(std::shared_ptr<const TrialFamily> family, Parameters theta) {
  return {[family, theta](const Configuration& x) { return nodal_shape_velocity(*family, theta, x); },
          [family, theta](const Configuration& x) {
            auto g = family->evaluate(theta, x, quantity::value | quantity::gradient).gradient;
            const double n = norm(g);
            if (!(n > 0)) throw DegenerateNodeError("no normal at a critical node point");
            for (auto& v : g) v = -v / n;
            return g;
          }};
}

//! (E−λ)·∫ r(∇ψ·n) dμ / ∫ψ dη
inline EstimateWithError estimate_shape_derivative_dirichlet(const ScalarField& psi, const BoundaryField& field, const HittingRun& mu,
                                                             const WeightedSample& eta, const EstimateWithError& energy, double lambda,
                                                             std::size_t blocks = kJackknifeBlocks) {
  detail::check_alignment(mu, eta);
  const double e_val = energy.scalar();
  if (!(lambda < e_val)) throw UsageError("lambda must lie below the energy");
  std::size_t p = 0;
  for (const auto& s : mu.samples)
    if (!s.censored) {
      p = field.velocity(s.point).size();
      break;
    }
  if (p == 0) throw UsageError("no exit samples");
  const std::size_t n = eta.size();
  const auto acc = detail::per_walker_sums(mu, p, [&](const HittingSample& s, std::span<double> out) {
    const auto r = field.velocity(s.point);
    const auto nrm = field.normal(s.point);
    const double dn = dot(psi.gradient(s.point), nrm);
    for (std::size_t k = 0; k < p; ++k) out[k] = r[k] * dn;
  });
  const auto sums = stats::block_sums(n, p + 1, blocks, [&](std::size_t i, std::span<double> out) {
    for (std::size_t k = 0; k < p; ++k) out[k] = acc[i][k];
    out[p] = eta.weights[i] * psi.value(eta.points[i]);
  });
  const auto jk = stats::jackknife_sums(sums, [&](std::span<const double> s) {
    std::vector<double> v(p + 1);
    for (std::size_t k = 0; k < p; ++k) v[k] = (e_val - lambda) * s[k] / s[p];
    v[p] = s[p];
    return v;
  });
  detail::check_normalization(jk, p);
  EstimateWithError e;
  e.value.assign(jk.value.begin(), jk.value.begin() + static_cast<std::ptrdiff_t>(p));
  e.covariance.assign(p * p, 0.0);
  e.std_error.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) e.covariance[i * p + j] = jk.covariance[i * (p + 1) + j];
  std::vector<double> d(p);
  for (std::size_t k = 0; k < p; ++k) d[k] = e.value[k] / (e_val - lambda);
  detail::add_energy_error(e, d, energy.std_error.empty() ? 0.0 : energy.scalar_error());
  e.n_effective = stats::kish_effective_size(eta.weights);
  e.method = "dirichlet_shape_jackknife";
  return e;
}

// ---------------------------------------------------------------------------
// symmetry diagnostic

struct SymmetryRow {
  std::string name;
  double mean = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  bool degenerate = false;  //!< zero spread: the function vanishes on every sample
};

struct SymmetryReport {
  std::vector<SymmetryRow> rows;
  double n_effective = 0.0;
  std::vector<std::string> warnings;

  double max_abs_z() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, std::abs(r.z));
    return m;
  }
};

//! Components of ∇θψ^I followed by the model's odd monomials.
inline std::vector<NamedFunction> default_symmetry_battery(std::shared_ptr<const TrialFamily> family, const Parameters& theta,
                                                           const std::vector<NamedFunction>& monomials) {
  std::vector<NamedFunction> out;
  for (std::size_t k = 0; k < family->parameter_count(); ++k)
    out.push_back({"dpsi/dtheta" + std::to_string(k + 1), [family, theta, k](const Configuration& x) {
                     return family->evaluate(theta, x, quantity::value | quantity::theta_gradient).theta_gradient[k];
                   }});
  out.insert(out.end(), monomials.begin(), monomials.end());
  return out;
}

inline SymmetryReport symmetry_diagnostic(const HittingRun& mu, const SymmetryGroup& group, std::span<const NamedFunction> tests,
                                          std::size_t blocks = kJackknifeBlocks) {
  const std::size_t q = tests.size();
  if (q == 0) throw UsageError("empty test-function battery");
  std::size_t checked = 0;
  for (const auto& s : mu.samples) {
    if (s.censored) continue;
    if (++checked > 200) break;
    for (const auto& g : tests) {
      const double v = g(s.point);
      for (const auto& op : group.elements())
        if (std::abs(g(op.apply(s.point)) - op.parity() * v) > 1e-8 * (1.0 + std::abs(v)))
          throw UsageError("test function '" + g.name + "' is not skew-symmetric on the node samples");
    }
  }
  const std::size_t n = mu.walker_count();
  const auto acc = detail::per_walker_sums(mu, q, [&](const HittingSample& s, std::span<double> out) {
    for (std::size_t k = 0; k < q; ++k) out[k] = tests[k](s.point);
  });
  const auto sums = stats::block_sums(n, q, blocks, [&](std::size_t i, std::span<double> out) {
    for (std::size_t k = 0; k < q; ++k) out[k] = acc[i][k];
  });
  const auto jk = stats::jackknife_sums(sums, [&](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); });
  SymmetryReport rep;
  std::vector<double> w;
  for (const auto& s : mu.samples)
    if (!s.censored) w.push_back(s.weight);
  rep.n_effective = stats::kish_effective_size(w);
  for (std::size_t k = 0; k < q; ++k) {
    SymmetryRow r{tests[k].name, jk.value[k], jk.std_error[k], 0.0, false};
    if (r.std_error > 0)
      r.z = r.mean / r.std_error;
    else {
      r.degenerate = true;
      r.z = r.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.mean);
    }
    rep.rows.push_back(r);
  }
  if (rep.n_effective < 500) rep.warnings.push_back("fewer than 500 effective hitting samples; diagnostic is underpowered");
  return rep;
}

}  // namespace nodalmc::estimators
