#pragma once

#include <exception>
#include <mutex>

#include "nodalmc/core.hpp"
#include "nodalmc/random.hpp"
#include "nodalmc/statistics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nodalmc::diffusion {

//! Walker slots are split into this many contiguous groups that resample independently,
//! so walker-block jackknife errors stay valid across resampling.
inline constexpr std::size_t kWalkerGroups = 64;

enum class PropagationMode { plain, drifted };
enum class InitialDistribution { uniform_box, trial_density };

struct PropagationConfig {
  double dt = 1e-3;
  double total_time = 1.0;
  double lambda = 0.0;
  PropagationMode mode = PropagationMode::plain;
  std::size_t resample_interval = 10;
  double ess_fraction = 0.5;
  //! exit points satisfy |ψ| < bisection_tol·|∇ψ|·√dt
  double bisection_tol = 1e-6;
  //! start of the energy fit window; negative means T/2
  double burn_in = -1.0;
  //! kill with the Brownian-bridge crossing probability between steps (plain mode)
  bool bridge_correction = true;
  //! drifted mode: scale the drift and the local-energy deviation near nodes by
  //! f = (√(1 + 2|b|²dt) − 1)/(|b|²dt) (Umrigar–Nightingale–Runge); f → 1 as dt → 0
  bool regularize = true;
  InitialDistribution initial = InitialDistribution::uniform_box;
  std::size_t metropolis_steps = 200;
  double metropolis_scale = 0.5;
  //! continuation weights below this fraction of the start weight play Russian roulette
  double roulette_threshold = 1e-3;
  int threads = 1;

  double energy_window_start() const { return burn_in >= 0 ? burn_in : 0.5 * total_time; }

  void validate() const {
    if (!(dt >= 0) || !std::isfinite(dt)) throw UsageError("dt must be non-negative");
    if (!(total_time >= 0) || !std::isfinite(total_time)) throw UsageError("total time must be non-negative");
    if (!std::isfinite(lambda)) throw UsageError("lambda must be finite");
    if (resample_interval == 0) throw UsageError("resample_interval must be at least 1");
    if (!(ess_fraction >= 0 && ess_fraction <= 1)) throw UsageError("ess_fraction must lie in [0, 1]");
    if (!(bisection_tol > 0)) throw UsageError("bisection_tol must be positive");
    if (!(roulette_threshold > 0 && roulette_threshold < 1)) throw UsageError("roulette_threshold must lie in (0, 1)");
    if (threads < 1) throw UsageError("threads must be at least 1");
  }
};

enum class WalkerStatus { alive, exited };

struct Walker {
  Configuration position;
  double log_weight = 0.0;
  double clock = 0.0;
  WalkerStatus status = WalkerStatus::alive;
  std::optional<Configuration> exit_point;
  std::optional<double> exit_time;
  bool diverged = false;

  bool alive() const { return status == WalkerStatus::alive; }
};

struct ExitRecord {
  Configuration point;
  double time = 0.0;
  double fraction = 1.0;
  bool converged = true;
};

struct WeightRecord {
  double time;
  double log_multiplier;
  //! per group: log of the group's mean slot weight, in the frame of the previous record
  std::vector<double> group_log_mass = {};
};

struct EnsembleCounters {
  std::size_t resamples = 0;
  std::size_t clamped_weights = 0;
  std::size_t exits = 0;
  std::size_t bridge_exits = 0;
  std::size_t rejected_crossings = 0;
  std::size_t diverged = 0;
  std::size_t unconverged_exits = 0;
};

struct Ensemble {
  std::vector<Walker> walkers;
  std::vector<WeightRecord> history;
  std::uint64_t rng_seed = 0;
  double dt = 0.0;
  double time = 0.0;
  double lambda = 0.0;
  PropagationMode mode = PropagationMode::plain;
  std::uint32_t epoch = 0;
  //! group b owns slots [group_edges[b], group_edges[b+1])
  std::vector<std::size_t> group_edges;
  EnsembleCounters counters;

  std::size_t alive_count() const {
    return static_cast<std::size_t>(std::count_if(walkers.begin(), walkers.end(), [](const Walker& w) { return w.alive(); }));
  }

  //! Kish effective size over all slots (dead walkers count as weight 0).
  double effective_sample_size() const {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& w : walkers)
      if (w.alive()) mx = std::max(mx, w.log_weight);
    if (!std::isfinite(mx)) return 0.0;
    double s = 0.0, s2 = 0.0;
    for (const auto& w : walkers)
      if (w.alive()) {
        const double v = std::exp(w.log_weight - mx);
        s += v;
        s2 += v * v;
      }
    return s * s / s2;
  }
};

namespace detail {

inline constexpr double kLogWeightFloor = -745.0;

// Runs body(i) for i in [0, n) with the requested thread count, rethrowing the
// first exception (lowest index) after the loop.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  bool any = false;
  std::mutex m;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
      std::lock_guard<std::mutex> lock(m);
      any = true;
    }
  }
  (void)threads;
  if (any)
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
}

inline bool same_sign(double a, double b) { return (a > 0 && b > 0) || (a < 0 && b < 0); }

// Moves x onto the fixed-point set of a parity −1 involution when x is within a couple of
// node distances of it. ψ vanishes identically there, so the snap only removes bisection error.
inline void snap_to_symmetry_node(Configuration& x, const TrialFamily& family, const Parameters& theta, const SymmetryGroup* group) {
  if (!group) return;
  const auto t = family.evaluate(theta, x, quantity::value | quantity::gradient);
  const double g = norm(t.gradient);
  if (!(g > 0)) return;
  const double reach = 4.0 * std::abs(t.value) / g + 1e-14 * (1.0 + norm(x));
  for (const auto& s : group->elements()) {
    if (s.parity() > 0 || !s.is_involution()) continue;
    const Configuration y = s.apply(x);
    Configuration diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
    if (norm(diff) <= reach) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * (x[i] + y[i]);
      return;
    }
  }
}

inline double exit_tolerance(double grad_norm, double bisection_tol, double dt) {
  return bisection_tol * grad_norm * std::sqrt(dt);
}

// Newton projection along ∇ψ onto the node, used after a bridge crossing.
inline ExitRecord project_to_node(const Configuration& start, const TrialFamily& family, const Parameters& theta, double tol_factor,
                                  double dt) {
  ExitRecord rec{start, 0.0, 0.5, false};
  Configuration y = start;
  const double max_move = 10.0 * std::sqrt(dt) + 1e-12;
  for (int it = 0; it < 50; ++it) {
    const auto t = family.evaluate(theta, y, quantity::value | quantity::gradient);
    const double g2 = dot(t.gradient, t.gradient);
    if (!(g2 > 0)) break;
    if (std::abs(t.value) < exit_tolerance(std::sqrt(g2), tol_factor, dt)) {
      rec.point = y;
      rec.converged = true;
      return rec;
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= t.value * t.gradient[i] / g2;
    Configuration move(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) move[i] = y[i] - start[i];
    if (!all_finite(y) || norm(move) > max_move) break;
  }
  return rec;
}

}  // namespace detail

//! Straight-segment bisection between prev and next when ψ changes sign (or next sits on the node).
inline std::optional<ExitRecord> detect_and_refine_exit(const Walker& prev, const Walker& next, const TrialFamily& family,
                                                        const Parameters& theta, const PropagationConfig& config,
                                                        const SymmetryGroup* group = nullptr) {
  if (!prev.alive()) throw UsageError("detect_and_refine_exit needs an alive walker");
  const double dt = next.clock > prev.clock ? next.clock - prev.clock : config.dt;
  const double pa = family.value(theta, prev.position);
  const auto tb = family.evaluate(theta, next.position, quantity::value | quantity::gradient);
  const bool on_node = std::abs(tb.value) < detail::exit_tolerance(norm(tb.gradient), config.bisection_tol, dt);
  if (!on_node && detail::same_sign(pa, tb.value)) return std::nullopt;

  ExitRecord rec{next.position, next.clock, 1.0, true};
  if (!on_node) {
    double lo = 0.0, hi = 1.0, best = std::numeric_limits<double>::infinity();
    rec.converged = false;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Configuration x = lerp(prev.position, next.position, mid);
      const auto t = family.evaluate(theta, x, quantity::value | quantity::gradient);
      if (std::abs(t.value) < best) {
        best = std::abs(t.value);
        rec.point = x;
        rec.fraction = mid;
      }
      if (std::abs(t.value) < detail::exit_tolerance(norm(t.gradient), config.bisection_tol, dt)) {
        rec.converged = true;
        break;
      }
      if (detail::same_sign(t.value, pa))
        lo = mid;
      else
        hi = mid;
    }
    rec.time = prev.clock + rec.fraction * dt;
  }
  detail::snap_to_symmetry_node(rec.point, family, theta, group);
  return rec;
}

namespace detail {

// Per-walker cache of what the next step needs at the current position.
struct Site {
  double psi = 0.0;
  //! local energy after regularization (drifted mode)
  double energy = 0.0;
  double grad_norm = 0.0;
  Configuration drift;
  double g = 0.0;
  bool valid = true;
};

class Kernel {
 public:
  Kernel(const Model& model, const TrialFamily& family, const Parameters& theta, const PropagationConfig& config, PropagationMode mode,
         double lambda)
      : model_(model), family_(family), theta_(theta), cfg_(config), mode_(mode), lambda_(lambda), diag_(model.box().diagonal()),
        group_(model.group() ? &*model.group() : nullptr) {}

  Site evaluate(const Configuration& x) const {
    Site s;
    if (mode_ == PropagationMode::plain) {
      const auto t = family_.evaluate(theta_, x, quantity::value | quantity::gradient);
      s.psi = t.value;
      s.grad_norm = norm(t.gradient);
      s.g = model_.potential(x) - lambda_;
      return s;
    }
    const auto t = family_.evaluate(theta_, x, quantity::value | quantity::gradient | quantity::laplacian);
    s.psi = t.value;
    s.grad_norm = norm(t.gradient);
    if (std::abs(t.value) < node_threshold(s.grad_norm, diag_)) {
      s.valid = false;
      s.drift = Configuration(x.size());
      s.g = 0.0;
      return s;
    }
    s.drift = Configuration(x.size());
    double v2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.drift[i] = t.gradient[i] / t.value;
      v2 += s.drift[i] * s.drift[i];
    }
    s.energy = model_.potential(x) - t.laplacian / (2.0 * t.value);
    if (cfg_.regularize && v2 * cfg_.dt > 0) {
      const double a = v2 * cfg_.dt;
      const double f = (std::sqrt(1.0 + 2.0 * a) - 1.0) / a;
      for (std::size_t i = 0; i < x.size(); ++i) s.drift[i] *= f;
      s.energy = e_ref_ + (s.energy - e_ref_) * f;
    }
    s.g = s.energy - lambda_;
    return s;
  }

  // One Euler–Maruyama step with exit handling. Returns true when the walker exited.
  bool step(Walker& w, Site& site, RandomStream& rng, EnsembleCounters& counters) const {
    const double dt = cfg_.dt;
    if (dt == 0.0) return false;
    const double sq = std::sqrt(dt);
    Walker next = w;
    for (std::size_t i = 0; i < w.position.size(); ++i) {
      const double b = mode_ == PropagationMode::drifted ? site.drift[i] : 0.0;
      next.position[i] = w.position[i] + b * dt + sq * rng.gaussian();
    }
    next.clock = w.clock + dt;
    if (!all_finite(next.position)) {
      w.status = WalkerStatus::exited;
      w.diverged = true;
      ++counters.diverged;
      return true;
    }
    const Site s1 = evaluate(next.position);
    const bool crossed = !same_sign(site.psi, s1.psi) || !s1.valid || std::abs(s1.psi) < exit_tolerance(s1.grad_norm, cfg_.bisection_tol, dt);
    if (crossed && mode_ == PropagationMode::drifted) {
      // the drifted process never reaches the node; a crossing is an Euler overshoot, so the move is rejected
      w.log_weight -= site.g * dt;
      w.clock += dt;
      ++counters.rejected_crossings;
      return false;
    }
    if (crossed) {
      auto rec = detect_and_refine_exit(w, next, family_, theta_, cfg_, group_);
      if (!rec) rec = ExitRecord{next.position, next.clock, 1.0, true};
      finish_exit(w, site, *rec, dt, counters);
      return true;
    }
    if (mode_ == PropagationMode::plain && cfg_.bridge_correction && site.grad_norm > 0 && s1.grad_norm > 0) {
      const double d0 = std::abs(site.psi) / site.grad_norm, d1 = std::abs(s1.psi) / s1.grad_norm;
      const double arg = 2.0 * d0 * d1 / dt;
      if (arg < 40.0 && rng.uniform() < std::exp(-arg)) {
        auto rec = project_to_node(d0 <= d1 ? w.position : next.position, family_, theta_, cfg_.bisection_tol, dt);
        rec.fraction = d0 / (d0 + d1);
        rec.time = w.clock + rec.fraction * dt;
        snap_to_symmetry_node(rec.point, family_, theta_, group_);
        ++counters.bridge_exits;
        finish_exit(w, site, rec, dt, counters);
        return true;
      }
    }
    next.log_weight = w.log_weight - 0.5 * (site.g + s1.g) * dt;
    w = next;
    site = s1;
    return false;
  }

  PropagationMode mode() const { return mode_; }
  void set_reference_energy(double e) { e_ref_ = e; }

 private:
  void finish_exit(Walker& w, const Site& site, const ExitRecord& rec, double dt, EnsembleCounters& counters) const {
    const double g_exit = mode_ == PropagationMode::plain ? model_.potential(rec.point) - lambda_ : site.g;
    w.log_weight -= 0.5 * (site.g + g_exit) * rec.fraction * dt;
    w.clock += rec.fraction * dt;
    w.position = rec.point;
    w.exit_point = rec.point;
    w.exit_time = w.clock;
    w.status = WalkerStatus::exited;
    ++counters.exits;
    if (!rec.converged) ++counters.unconverged_exits;
  }

  const Model& model_;
  const TrialFamily& family_;
  const Parameters& theta_;
  const PropagationConfig& cfg_;
  PropagationMode mode_;
  double lambda_;
  double diag_;
  const SymmetryGroup* group_;
  double e_ref_ = 0.0;
};

inline std::uint32_t stream_index(std::size_t i) { return static_cast<std::uint32_t>(i); }

}  // namespace detail

//! Single Euler–Maruyama step without exit detection; the weight uses the trapezoid rule.
inline Walker advance_walker(const Walker& walker, const Model& model, const TrialFamily* family, const Parameters& theta,
                             const PropagationConfig& config, RandomStream& rng) {
  if (!walker.alive()) throw UsageError("advance_walker needs an alive walker");
  if (config.dt == 0.0) return walker;
  if (config.mode == PropagationMode::drifted && !family) throw UsageError("drifted mode needs a trial family");
  auto g_and_drift = [&](const Configuration& x, Configuration& drift) {
    drift = Configuration(x.size());
    if (config.mode == PropagationMode::plain) return model.potential(x) - config.lambda;
    const auto t = family->evaluate(theta, x, quantity::value | quantity::gradient | quantity::laplacian);
    if (t.value == 0.0) throw NodeProximityError("drifted step at a node");
    for (std::size_t i = 0; i < x.size(); ++i) drift[i] = t.gradient[i] / t.value;
    return model.potential(x) - t.laplacian / (2.0 * t.value) - config.lambda;
  };
  Configuration b0, b1;
  const double g0 = g_and_drift(walker.position, b0);
  Walker next = walker;
  const double sq = std::sqrt(config.dt);
  for (std::size_t i = 0; i < walker.position.size(); ++i)
    next.position[i] = walker.position[i] + b0[i] * config.dt + sq * rng.gaussian();
  next.clock += config.dt;
  if (!all_finite(next.position)) {
    next.status = WalkerStatus::exited;
    next.diverged = true;
    return next;
  }
  double g1;
  try {
    g1 = g_and_drift(next.position, b1);
  } catch (const NodeProximityError&) {
    g1 = g0;
  }
  next.log_weight -= 0.5 * (g0 + g1) * config.dt;
  return next;
}

//! Systematic resampling of the alive walkers of slots [lo, hi) back into those slots.
//! Every new walker carries the mean weight of the range, so the range keeps its total.
inline void resample_range(Ensemble& ensemble, std::size_t lo, std::size_t hi, RandomStream& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = lo; i < hi; ++i)
    if (ensemble.walkers[i].alive()) mx = std::max(mx, ensemble.walkers[i].log_weight);
  if (!std::isfinite(mx)) return;
  std::vector<double> cum;
  std::vector<std::size_t> idx;
  double total = 0.0;
  for (std::size_t i = lo; i < hi; ++i)
    if (ensemble.walkers[i].alive()) {
      total += std::exp(ensemble.walkers[i].log_weight - mx);
      cum.push_back(total);
      idx.push_back(i);
    }
  const std::size_t n = hi - lo;
  const double log_mean = mx + std::log(total / static_cast<double>(n));
  std::vector<Walker> fresh(n);
  const double u = rng.uniform();
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = (static_cast<double>(k) + u) / static_cast<double>(n) * total;
    while (j + 1 < cum.size() && cum[j] < target) ++j;
    Walker w;
    w.position = ensemble.walkers[idx[j]].position;
    w.clock = ensemble.time;
    w.log_weight = log_mean;
    fresh[k] = w;
  }
  std::move(fresh.begin(), fresh.end(), ensemble.walkers.begin() + static_cast<std::ptrdiff_t>(lo));
}

//! End-of-interval bookkeeping: records every group's mass, resamples each group whose
//! Kish size fell below ess_fraction of its slots, then divides all weights by the mean over N slots.
inline void update_population(Ensemble& ensemble, double ess_fraction, std::uint64_t seed) {
  auto& ws = ensemble.walkers;
  const std::size_t n = ws.size();
  if (ensemble.group_edges.empty()) ensemble.group_edges = stats::block_boundaries(n, kWalkerGroups);
  const auto& edges = ensemble.group_edges;
  const std::size_t groups = edges.size() - 1;
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& w : ws)
    if (w.alive()) mx = std::max(mx, w.log_weight);
  if (!std::isfinite(mx)) throw ExtinctionError("all walkers exited before time " + std::to_string(ensemble.time));
  WeightRecord rec{ensemble.time, 0.0, std::vector<double>(groups)};
  double total = 0.0;
  for (std::size_t b = 0; b < groups; ++b) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = edges[b]; i < edges[b + 1]; ++i)
      if (ws[i].alive()) {
        const double v = std::exp(ws[i].log_weight - mx);
        s += v;
        s2 += v * v;
      }
    const auto slots = static_cast<double>(edges[b + 1] - edges[b]);
    rec.group_log_mass[b] = s > 0 ? mx + std::log(s / slots) : -std::numeric_limits<double>::infinity();
    total += s;
    if (s > 0 && s * s / s2 < ess_fraction * slots) {
      RandomStream rng(seed, static_cast<std::uint32_t>(b), ensemble.epoch, StreamPurpose::resampling);
      resample_range(ensemble, edges[b], edges[b + 1], rng);
      ++ensemble.counters.resamples;
    }
  }
  rec.log_multiplier = mx + std::log(total / static_cast<double>(n));
  for (auto& w : ws)
    if (w.alive()) {
      w.log_weight -= rec.log_multiplier;
      if (w.log_weight < detail::kLogWeightFloor) {
        w.log_weight = detail::kLogWeightFloor;
        ++ensemble.counters.clamped_weights;
      }
    }
  ensemble.history.push_back(std::move(rec));
}

inline Configuration sample_initial_position(const Model& model, const TrialFamily& family, const Parameters& theta,
                                             const PropagationConfig& config, RandomStream& rng) {
  const Box& box = model.box();
  const double diag = box.diagonal();
  Configuration x(model.dimension());
  double psi = 0.0;
  bool found = false;
  for (int attempt = 0; attempt < 1000000 && !found; ++attempt) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = box.lower[k] + rng.uniform() * box.width(k);
    const auto t = family.evaluate(theta, x, quantity::value | quantity::gradient);
    psi = t.value;
    found = psi > node_threshold(norm(t.gradient), diag);
  }
  if (!found) throw DomainError("no point with positive trial function found in the model box");
  if (config.initial == InitialDistribution::trial_density) {
    for (std::size_t s = 0; s < config.metropolis_steps; ++s) {
      Configuration y = x;
      for (std::size_t k = 0; k < y.size(); ++k) y[k] += config.metropolis_scale * rng.gaussian();
      const double py = family.value(theta, y);
      const double u = rng.uniform();
      if (py > 0 && u < (py * py) / (psi * psi)) {
        x = y;
        psi = py;
      }
    }
  }
  return x;
}

inline Ensemble propagate_ensemble(const Model& model, const TrialFamily& family, const Parameters& theta, const PropagationConfig& config,
                                   std::vector<Configuration> initial, std::uint64_t seed) {
  config.validate();
  const std::size_t n = initial.size();
  if (n < 2) throw UsageError("an ensemble needs at least two walkers");
  Ensemble ens;
  ens.rng_seed = seed;
  ens.dt = config.dt;
  ens.lambda = config.lambda;
  ens.mode = config.mode;
  ens.walkers.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (initial[i].size() != model.dimension()) throw UsageError("initial position has wrong dimension");
    ens.walkers[i].position = initial[i];
  }
  ens.group_edges = stats::block_boundaries(n, kWalkerGroups);
  ens.history.push_back({0.0, 0.0});

  detail::Kernel kernel(model, family, theta, config, config.mode, config.lambda);
  // reference for the local-energy regularization: weighted mean of the regularized local energy,
  // updated once per interval in slot order so it does not depend on the thread count
  std::vector<double> site_energy(n, 0.0);
  auto reference_energy = [&] {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& w : ens.walkers)
      if (w.alive()) mx = std::max(mx, w.log_weight);
    double s = 0.0, se = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (ens.walkers[i].alive()) {
        const double v = std::exp(ens.walkers[i].log_weight - mx);
        s += v;
        se += v * site_energy[i];
      }
    return se / s;
  };
  if (config.mode == PropagationMode::drifted && config.regularize) {
    kernel.set_reference_energy(config.lambda);
    detail::parallel_for(n, config.threads, [&](std::size_t i) {
      const auto t = family.evaluate(theta, ens.walkers[i].position, quantity::value | quantity::laplacian);
      site_energy[i] = t.value != 0.0 ? model.potential(ens.walkers[i].position) - t.laplacian / (2.0 * t.value) : 0.0;
    });
    // the raw mean can be dominated by a walker next to the node, so start from the median
    auto sorted = site_energy;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    kernel.set_reference_energy(sorted[n / 2]);
  }
  const std::size_t total_steps = config.dt > 0 ? static_cast<std::size_t>(std::llround(config.total_time / config.dt)) : 0;
  std::vector<EnsembleCounters> per_walker(n);
  for (std::size_t done = 0; done < total_steps;) {
    const std::size_t block = std::min(config.resample_interval, total_steps - done);
    const std::uint32_t epoch = ++ens.epoch;
    detail::parallel_for(n, config.threads, [&](std::size_t i) {
      Walker& w = ens.walkers[i];
      if (!w.alive()) return;
      RandomStream rng(seed, detail::stream_index(i), epoch, StreamPurpose::propagation);
      detail::Site site = kernel.evaluate(w.position);
      for (std::size_t k = 0; k < block; ++k)
        if (kernel.step(w, site, rng, per_walker[i])) break;
      site_energy[i] = site.energy;
    });
    done += block;
    ens.time = static_cast<double>(done) * config.dt;
    for (auto& w : ens.walkers)
      if (w.alive()) w.clock = ens.time;
    if (ens.alive_count() == 0) throw ExtinctionError("all walkers exited before time " + std::to_string(ens.time));
    if (config.mode == PropagationMode::drifted && config.regularize) kernel.set_reference_energy(reference_energy());
    update_population(ens, config.ess_fraction, seed);
  }
  for (const auto& c : per_walker) {
    ens.counters.exits += c.exits;
    ens.counters.bridge_exits += c.bridge_exits;
    ens.counters.rejected_crossings += c.rejected_crossings;
    ens.counters.diverged += c.diverged;
    ens.counters.unconverged_exits += c.unconverged_exits;
  }
  return ens;
}

inline std::vector<Configuration> initial_positions(const Model& model, const TrialFamily& family, const Parameters& theta,
                                                    const PropagationConfig& config, std::size_t n, std::uint64_t seed) {
  std::vector<Configuration> pos(n);
  detail::parallel_for(n, config.threads, [&](std::size_t i) {
    RandomStream rng(seed, detail::stream_index(i), 0, StreamPurpose::initialization);
    pos[i] = sample_initial_position(model, family, theta, config, rng);
  });
  return pos;
}

inline Ensemble propagate_ensemble(const Model& model, const TrialFamily& family, const Parameters& theta, const PropagationConfig& config,
                                   std::size_t n, std::uint64_t seed) {
  config.validate();
  validate_family(model, family, theta);
  if (n < 2) throw UsageError("an ensemble needs at least two walkers");
  return propagate_ensemble(model, family, theta, config, initial_positions(model, family, theta, config, n, seed), seed);
}

// ---------------------------------------------------------------------------
// continuation to the nodes

struct HittingSample {
  Configuration point;
  double weight = 0.0;  //!< start weight times exp(−∫_T^τ (V−λ))
  double exit_time = 0.0;
  bool censored = false;
  std::size_t origin = 0;  //!< index of the start walker
};

struct HittingRun {
  std::vector<HittingSample> samples;
  //! η^FN sample at time T: positions and weights (the denominators), one per alive walker
  std::vector<Configuration> start_points;
  std::vector<double> start_weights;
  double lambda = 0.0;
  double start_time = 0.0;
  std::size_t censored_count = 0;
  std::size_t roulette_terminated = 0;
  std::size_t unconverged_exits = 0;

  std::size_t walker_count() const { return start_points.size(); }

  double censored_weight_fraction() const {
    double c = 0.0, d = 0.0;
    for (const auto& s : samples)
      if (s.censored) c += s.weight;
    for (double w : start_weights) d += w;
    return d > 0 ? c / d : 0.0;
  }
};

//! Log weights of the alive walkers as a sample of the plain fixed-node measure (drifted weights divided by ψ).
inline std::vector<double> fixed_node_log_weights(const Ensemble& ensemble, const TrialFamily& family, const Parameters& theta,
                                                  std::vector<std::size_t>& alive) {
  alive.clear();
  std::vector<double> lw;
  for (std::size_t i = 0; i < ensemble.walkers.size(); ++i) {
    const auto& w = ensemble.walkers[i];
    if (!w.alive()) continue;
    alive.push_back(i);
    double v = w.log_weight;
    if (ensemble.mode == PropagationMode::drifted) v -= std::log(std::abs(family.value(theta, w.position)));
    lw.push_back(v);
  }
  return lw;
}

//! Plain Brownian continuation without resampling until every walker hits the node or max_time elapses.
inline HittingRun continue_to_exit(const Ensemble& ensemble, const Model& model, const TrialFamily& family, const Parameters& theta,
                                   const PropagationConfig& config, double max_time, std::uint64_t seed) {
  config.validate();
  std::vector<std::size_t> alive;
  const auto lw = fixed_node_log_weights(ensemble, family, theta, alive);
  if (alive.empty()) throw ExtinctionError("no alive walkers to continue");
  const double mx = *std::max_element(lw.begin(), lw.end());

  HittingRun run;
  run.lambda = config.lambda;
  run.start_time = ensemble.time;
  const std::size_t m = alive.size();
  run.start_points.resize(m);
  run.start_weights.resize(m);
  std::vector<HittingSample> out(m);
  std::vector<int> kept(m, 0);
  std::vector<EnsembleCounters> counters(m);
  std::vector<char> rouletted(m, 0);

  const detail::Kernel kernel(model, family, theta, config, PropagationMode::plain, config.lambda);
  const double log_floor = std::log(config.roulette_threshold);
  const std::size_t max_steps = config.dt > 0 ? static_cast<std::size_t>(std::ceil(max_time / config.dt)) : 0;

  detail::parallel_for(m, config.threads, [&](std::size_t k) {
    const std::size_t i = alive[k];
    const double d = std::exp(lw[k] - mx);
    run.start_points[k] = ensemble.walkers[i].position;
    run.start_weights[k] = d;
    Walker w;
    w.position = ensemble.walkers[i].position;
    w.clock = ensemble.time;
    RandomStream rng(seed, detail::stream_index(i), 0, StreamPurpose::continuation);
    detail::Site site = kernel.evaluate(w.position);
    bool exited = false;
    for (std::size_t s = 0; s < max_steps && !exited; ++s) {
      exited = kernel.step(w, site, rng, counters[k]);
      if (!exited && w.log_weight < log_floor) {
        if (rng.uniform() < std::exp(w.log_weight - log_floor)) {
          w.log_weight = log_floor;
        } else {
          rouletted[k] = 1;
          return;
        }
      }
    }
    if (w.diverged) return;
    HittingSample hs;
    hs.origin = k;
    hs.point = w.position;
    hs.exit_time = w.clock;
    hs.censored = !exited;
    hs.weight = d * std::exp(w.log_weight);
    out[k] = hs;
    kept[k] = 1;
  });

  for (std::size_t k = 0; k < m; ++k) {
    run.roulette_terminated += rouletted[k];
    run.unconverged_exits += counters[k].unconverged_exits;
    if (!kept[k]) continue;
    if (out[k].censored) ++run.censored_count;
    run.samples.push_back(out[k]);
  }
  return run;
}

}  // namespace nodalmc::diffusion
