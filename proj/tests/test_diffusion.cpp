#include <gtest/gtest.h>

#include <numbers>

#include "nodalmc/estimators.hpp"
#include "nodalmc/models.hpp"

using namespace nodalmc;
using diffusion::PropagationConfig;
using diffusion::PropagationMode;

namespace {

PropagationConfig plain(double dt, double total) {
  PropagationConfig c;
  c.dt = dt;
  c.total_time = total;
  return c;
}

PropagationConfig drifted(double dt, double total) {
  auto c = plain(dt, total);
  c.mode = PropagationMode::drifted;
  c.initial = diffusion::InitialDistribution::trial_density;
  return c;
}

}  // namespace

TEST(Propagation, ThreadCountDoesNotChangeResults) {
  const auto e = models::make_model("interval");
  auto c = plain(1e-3, 0.5);
  const auto a = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 400, 21);
  c.threads = 3;
  const auto b = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 400, 21);
  ASSERT_EQ(a.walkers.size(), b.walkers.size());
  for (std::size_t i = 0; i < a.walkers.size(); ++i) {
    EXPECT_EQ(a.walkers[i].position, b.walkers[i].position);
    EXPECT_EQ(a.walkers[i].log_weight, b.walkers[i].log_weight);
  }
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].log_multiplier, b.history[i].log_multiplier);
}

TEST(Propagation, SeedSelectsTheRealization) {
  const auto e = models::make_model("interval");
  const auto c = plain(1e-3, 0.2);
  const auto a = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 100, 1);
  const auto b = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 100, 1);
  const auto d = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 100, 2);
  EXPECT_EQ(a.walkers[7].position, b.walkers[7].position);
  EXPECT_NE(a.walkers[7].position, d.walkers[7].position);
}

TEST(Propagation, AliveWalkersStayInTheNodalDomain) {
  const auto e = models::make_model("interval");
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, plain(1e-3, 1.0), 1000, 3);
  EXPECT_GT(ens.alive_count(), 500u);
  for (const auto& w : ens.walkers)
    if (w.alive()) {
      EXPECT_GT(w.position[0], 0.0);
      EXPECT_LT(w.position[0], 1.0);
    }
  EXPECT_GT(ens.counters.exits, 0u);
}

TEST(Propagation, IntervalEnergyFromExtinctionRate) {
  const auto e = models::make_model("interval");
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, plain(1e-3, 2.0), 2000, 4);
  const auto en = estimators::estimate_energy_extinction(ens);
  const double ref = std::numbers::pi * std::numbers::pi / 2;
  EXPECT_GT(en.scalar_error(), 0.0);
  EXPECT_LT(en.scalar_error(), 0.2);
  EXPECT_NEAR(en.scalar(), ref, 4 * en.scalar_error());
}

TEST(Propagation, DriftedHarmonicGroundstateHasConstantWeights) {
  // ψ is exact, so E_L − λ = 1/2 on every path and the fitted rate is exact
  const auto e = models::make_model("harmonic1d");
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, drifted(1e-3, 1.0), 2000, 5);
  const auto en = estimators::estimate_energy_extinction(ens);
  EXPECT_NEAR(en.scalar(), 0.5, 1e-10);
  EXPECT_LT(en.scalar_error(), 1e-10);
  // drifted walkers sample ψ² = exp(−x²), whose second moment is 1/2
  const auto x2 = estimators::estimate_eta(ens).average([](const Configuration& x) { return x[0] * x[0]; });
  EXPECT_NEAR(x2.scalar(), 0.5, 4 * x2.scalar_error() + 0.01);
}

TEST(Propagation, DriftedWalkersDoNotLeaveTheNodalDomain) {
  // exact trial with a real node: crossings are rejected, so E_L = 4 on every path and the rate is exact
  const auto e = models::make_model("odd_well3d");
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, drifted(1e-3, 1.0), 2000, 14);
  EXPECT_EQ(ens.alive_count(), 2000u);
  EXPECT_EQ(ens.counters.exits, 0u);
  EXPECT_GT(ens.counters.rejected_crossings, 0u);
  const auto en = estimators::estimate_energy_extinction(ens);
  EXPECT_NEAR(en.scalar(), 4.0, 1e-10);
}

TEST(Propagation, ExtinctionIsReported) {
  const auto e = models::make_model("interval", {{"length", 0.02}});
  EXPECT_THROW(diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, plain(1e-3, 1.0), 4, 6), ExtinctionError);
}

TEST(Propagation, ConfigValidation) {
  auto c = plain(1e-3, 1.0);
  c.resample_interval = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = plain(-1.0, 1.0);
  EXPECT_THROW(c.validate(), UsageError);
  c = plain(1e-3, 1.0);
  c.ess_fraction = 1.5;
  EXPECT_THROW(c.validate(), UsageError);
  const auto e = models::make_model("interval");
  EXPECT_THROW(diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, plain(1e-3, 1.0), 1, 6), UsageError);
}

TEST(ExitDetection, BisectsToTheNode) {
  const auto e = models::make_model("interval");
  diffusion::Walker prev, next;
  prev.position = Configuration{0.9};
  prev.clock = 1.0;
  next.position = Configuration{1.05};
  next.clock = 1.001;
  const auto cfg = plain(1e-3, 1.0);
  const auto rec = diffusion::detect_and_refine_exit(prev, next, *e.family, e.default_theta, cfg);
  ASSERT_TRUE(rec);
  EXPECT_TRUE(rec->converged);
  EXPECT_NEAR(rec->point[0], 1.0, 1e-6 * std::sqrt(1e-3) * 2);
  EXPECT_NEAR(rec->time, 1.0 + 1e-3 * (0.1 / 0.15), 1e-8);
  next.position = Configuration{0.95};
  EXPECT_FALSE(diffusion::detect_and_refine_exit(prev, next, *e.family, e.default_theta, cfg));
}

TEST(Continuation, IntervalExitsLandOnTheEnds) {
  const auto e = models::make_model("interval");
  const auto cfg = plain(1e-3, 0.5);
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, cfg, 500, 8);
  const auto run = diffusion::continue_to_exit(ens, *e.model, *e.family, e.default_theta, cfg, 20.0, 9);
  EXPECT_EQ(run.walker_count(), ens.alive_count());
  EXPECT_EQ(run.censored_count, 0u);
  for (const auto& s : run.samples) {
    const double x = s.point[0];
    EXPECT_LT(std::min(std::abs(x), std::abs(x - 1.0)), 1e-6) << x;
    EXPECT_GE(s.exit_time, run.start_time);
  }
}

TEST(Continuation, SymmetryNodeExitsAreSnapped) {
  const auto e = models::make_model("two_fermion_trap");
  const auto cfg = drifted(1e-3, 0.3);
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, cfg, 300, 10);
  const auto run = diffusion::continue_to_exit(ens, *e.model, *e.family, e.default_theta, cfg, 20.0, 11);
  ASSERT_FALSE(run.samples.empty());
  for (const auto& s : run.samples)
    if (!s.censored) {
      EXPECT_EQ(s.point[0], s.point[1]);
    }
}

TEST(Continuation, CensoringAtMaxTime) {
  const auto e = models::make_model("interval", {{"length", 4.0}});
  const auto cfg = plain(1e-3, 0.2);
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, cfg, 200, 12);
  const auto run = diffusion::continue_to_exit(ens, *e.model, *e.family, e.default_theta, cfg, 0.05, 13);
  EXPECT_GT(run.censored_count, 0u);
  EXPECT_GT(run.censored_weight_fraction(), 0.0);
}
