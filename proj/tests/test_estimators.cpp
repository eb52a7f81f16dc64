#include <gtest/gtest.h>

#include <numbers>

#include "nodalmc/estimators.hpp"
#include "nodalmc/models.hpp"
#include "nodalmc/oracle.hpp"

using namespace nodalmc;
using diffusion::PropagationConfig;
using diffusion::PropagationMode;

namespace {

constexpr double pi = std::numbers::pi;

struct IntervalRun {
  diffusion::Ensemble ensemble;
  diffusion::HittingRun run;
  EstimateWithError energy;
};

IntervalRun interval_run(double lambda, std::uint64_t seed) {
  static const auto e = models::make_model("interval");
  PropagationConfig c;
  c.dt = 1e-3;
  c.total_time = 2.0;
  c.lambda = lambda;
  IntervalRun r{diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 2000, seed), {}, {}};
  r.run = diffusion::continue_to_exit(r.ensemble, *e.model, *e.family, e.default_theta, c, 20.0, seed + 1);
  r.energy = estimators::estimate_energy_extinction(r.ensemble);
  return r;
}

}  // namespace

TEST(Mu, FreeIntervalAtZeroLambdaHasUnitMass) {
  // with V = λ = 0 every exit keeps its start weight
  const auto r = interval_run(0.0, 31);
  const std::vector<NamedFunction> fs{{"x", [](const Configuration& x) { return x[0]; }}};
  const auto mu = estimators::estimate_mu(r.run, fs);
  EXPECT_NEAR(mu.total_mass.scalar(), 1.0, 1e-12);
  const auto ref = oracle::analytic_interval_reference(0, 1, false, 0, 0, {[](double x) { return x; }});
  EXPECT_NEAR(mu.functionals[0].scalar(), ref.mu_functionals[0], 4 * mu.functionals[0].scalar_error() + 0.01);
  EXPECT_EQ(mu.censored_fraction, 0.0);
}

TEST(Mu, PositiveLambdaInflatesTheMass) {
  const auto r = interval_run(1.0, 33);
  const std::vector<NamedFunction> none;
  const auto mu = estimators::estimate_mu(r.run, none);
  const auto ref = oracle::analytic_interval_reference(0, 1, false, 0, 1.0, {[](double) { return 1.0; }});
  EXPECT_GT(mu.total_mass.scalar(), 1.0);
  EXPECT_NEAR(mu.total_mass.scalar(), ref.mu_functionals[0], 4 * mu.total_mass.scalar_error() + 0.01);
}

TEST(Gradient, IntervalSurfaceFormCountsBothSidesOfTheNode) {
  // the fixed-node form carries the factor 2 of the symmetrized gradient; the interval has no mirrored
  // side, so it reads −2E·(π/2)/(π/4) = −2π², twice the one-sided Dirichlet derivative
  const auto e = models::make_model("interval");
  const auto r = interval_run(0.0, 35);
  const auto eta = estimators::eta_from_run(r.run);
  const auto g = estimators::estimate_fn_gradient_surface(r.run, eta, *e.family, e.default_theta, r.energy, 0.0);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g.scalar(), -2 * pi * pi, 4 * g.scalar_error() + 0.1 * pi * pi);
}

TEST(Gradient, LambdaMustSitBelowTheEnergy) {
  const auto e = models::make_model("interval");
  const auto r = interval_run(0.0, 37);
  const auto eta = estimators::eta_from_run(r.run);
  EXPECT_THROW(estimators::estimate_fn_gradient_surface(r.run, eta, *e.family, e.default_theta, r.energy, 10.0), UsageError);
}

TEST(Gradient, EtaMustShareWalkersWithTheRun) {
  const auto e = models::make_model("interval");
  const auto r = interval_run(0.0, 39);
  auto eta = estimators::eta_from_run(r.run);
  eta.points.pop_back();
  eta.weights.pop_back();
  EXPECT_THROW(estimators::estimate_fn_gradient_surface(r.run, eta, *e.family, e.default_theta, r.energy, 0.0), UsageError);
}

TEST(Gradient, TwoFermionSymmetryNodeIsStationary) {
  // ∂θψ ∝ x1² − x2² vanishes on x1 = x2, so every surface sample contributes zero
  const auto e = models::make_model("two_fermion_trap");
  PropagationConfig c;
  c.dt = 1e-3;
  c.total_time = 0.5;
  c.mode = PropagationMode::drifted;
  c.initial = diffusion::InitialDistribution::trial_density;
  for (double th : {0.0, 0.05}) {
    const Parameters theta{th};
    const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, theta, c, 500, 41);
    const auto run = diffusion::continue_to_exit(ens, *e.model, *e.family, theta, c, 20.0, 42);
    const auto energy = estimators::estimate_energy_extinction(ens);
    const auto g = estimators::estimate_fn_gradient_surface(run, estimators::eta_from_run(run), *e.family, theta, energy, 0.0);
    EXPECT_EQ(g.scalar(), 0.0) << th;
  }
}

TEST(Gradient, BulkFormOnHarmonicTrial) {
  // at the exact trial ⟨ψ(H−E)∂θψ⟩ = 0 by self-adjointness, so the bulk form vanishes up to noise
  const auto e = models::make_model("harmonic1d");
  PropagationConfig c;
  c.dt = 1e-3;
  c.total_time = 1.0;
  c.mode = PropagationMode::drifted;
  c.initial = diffusion::InitialDistribution::trial_density;
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 1000, 43);
  const auto energy = estimators::estimate_energy_extinction(ens);
  const auto g = estimators::estimate_fn_gradient_bulk(estimators::estimate_eta_fixed_node(ens, *e.family, e.default_theta), *e.model,
                                                 *e.family, e.default_theta, energy);
  EXPECT_GT(g.scalar_error(), 0.0);
  EXPECT_NEAR(g.scalar(), 0.0, 4 * g.scalar_error());
}

TEST(Vmc, ExactTrialHasZeroVariance) {
  const auto e = models::make_model("two_fermion_trap");
  const auto v = estimators::estimate_vmc_energy(*e.model, *e.family, Parameters{0.0}, 5000, 1.0, 44);
  EXPECT_NEAR(v.scalar(), 2.0, 1e-12);
  EXPECT_LT(std::stod(v.metadata.at("sample_variance")), 1e-16);
}

TEST(Vmc, GaussianTrialMatchesClosedForm) {
  // ⟨H⟩ for exp(−ax²/2) is a/4 + 1/(4a)
  const auto e = models::make_model("harmonic1d");
  const double a = 1.3;
  const auto v = estimators::estimate_vmc_energy(*e.model, *e.family, Parameters{a - 1.0}, 50000, 1.0, 45);
  EXPECT_NEAR(v.scalar(), a / 4 + 1 / (4 * a), 4 * v.scalar_error());
  const double acc = std::stod(v.metadata.at("acceptance"));
  EXPECT_GT(acc, 0.2);
  EXPECT_LT(acc, 0.95);
  EXPECT_THROW(estimators::estimate_vmc_energy(*e.model, *e.family, Parameters{0.0}, 4, 1.0, 1), UsageError);
}

TEST(Shape, IntervalRightEndDerivative) {
  const auto e = models::make_model("interval");
  const auto r = interval_run(0.0, 47);
  const auto psi = estimators::trial_field(e.family, e.default_theta);
  const auto field = estimators::nodal_boundary_field(e.family, e.default_theta);
  const auto d = estimators::estimate_shape_derivative_dirichlet(psi, field, r.run, estimators::eta_from_run(r.run), r.energy, 0.0);
  EXPECT_NEAR(d.scalar(), -pi * pi, 4 * d.scalar_error() + 0.05 * pi * pi);
}

TEST(Symmetry, BatteryLayout) {
  const auto e = models::make_model("odd_well3d");
  const auto battery = estimators::default_symmetry_battery(e.family, e.default_theta, e.odd_monomials);
  ASSERT_EQ(battery.size(), 8u);
  EXPECT_EQ(battery[0].name, "dpsi/dtheta1");
  EXPECT_EQ(battery[2].name, "y");
}

TEST(Symmetry, InvariantNodeGivesSmallZ) {
  const auto e = models::make_model("odd_well3d");
  PropagationConfig c;
  c.dt = 1e-3;
  c.total_time = 0.5;
  c.mode = PropagationMode::drifted;
  c.initial = diffusion::InitialDistribution::trial_density;
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 1000, 49);
  const auto run = diffusion::continue_to_exit(ens, *e.model, *e.family, e.default_theta, c, 20.0, 50);
  const auto battery = estimators::default_symmetry_battery(e.family, e.default_theta, e.odd_monomials);
  const auto rep = estimators::symmetry_diagnostic(run, *e.model->group(), battery);
  ASSERT_EQ(rep.rows.size(), battery.size());
  EXPECT_LT(rep.max_abs_z(), 4.5);
  EXPECT_GT(rep.n_effective, 100.0);
}

TEST(Energy, WindowNeedsEnoughRecords) {
  const auto e = models::make_model("interval");
  PropagationConfig c;
  c.dt = 1e-3;
  c.total_time = 0.05;
  const auto ens = diffusion::propagate_ensemble(*e.model, *e.family, e.default_theta, c, 100, 51);
  EXPECT_THROW(estimators::estimate_energy_extinction(ens), UsageError);
}
