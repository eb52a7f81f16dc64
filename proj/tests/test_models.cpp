#include <gtest/gtest.h>

#include "nodalmc/models.hpp"
#include "nodalmc/random.hpp"

using namespace nodalmc;

namespace {

struct Case {
  std::string model;
  std::map<std::string, double> params;
  std::vector<double> theta;
};

std::vector<Case> cases() {
  return {
      {"interval", {}, {0.1}},
      {"interval", {{"left", -1.0}, {"length", 2.0}, {"symmetric", 1.0}}, {0.2}},
      {"harmonic1d", {}, {0.3}},
      {"two_fermion_trap", {}, {0.06}},
      {"two_fermion_trap_interacting", {}, {-0.04}},
      {"odd_well3d", {}, {0.2, -0.15}},
      {"n_fermion_trap_1d", {{"particles", 3.0}, {"alpha", 0.1}}, {0.05}},
      {"n_fermion_trap_1d", {{"particles", 4.0}, {"alpha", 0.0}}, {-0.03}},
  };
}

Configuration random_point(const Box& box, RandomStream& rng, double shrink) {
  Configuration x(box.dimension());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double c = 0.5 * (box.lower[k] + box.upper[k]);
    x[k] = c + shrink * (rng.uniform() - 0.5) * box.width(k);
  }
  return x;
}

// Fourth-order central differences of the value, used as an independent check of the analytic derivatives.
double d1(const std::function<double(double)>& f, double h) { return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h); }
double d2(const std::function<double(double)>& f, double h) {
  return (-f(-2 * h) + 16 * f(-h) - 30 * f(0) + 16 * f(h) - f(2 * h)) / (12 * h * h);
}

}  // namespace

class FamilyDerivatives : public ::testing::TestWithParam<Case> {};

TEST_P(FamilyDerivatives, MatchFiniteDifferences) {
  const auto& c = GetParam();
  std::map<std::string, double> given = c.params;
  const auto e = models::make_model(c.model, given);
  const Parameters theta(std::span<const double>(c.theta));
  const auto& fam = *e.family;
  RandomStream rng(99, 0, 0, StreamPurpose::test);
  const double h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    const Configuration x = random_point(e.model->box(), rng, 0.4);
    const auto t = fam.evaluate(theta, x, quantity::all);
    const double scale = 1.0 + std::abs(t.value) + norm(t.gradient);
    EXPECT_NEAR(fam.value(theta, x), t.value, 1e-14 * scale);
    double lap = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto along = [&](double s) {
        Configuration y = x;
        y[k] += s;
        return fam.value(theta, y);
      };
      EXPECT_NEAR(t.gradient[k], d1(along, h), 1e-7 * scale) << c.model << " axis " << k;
      lap += d2(along, h);
    }
    EXPECT_NEAR(t.laplacian, lap, 1e-5 * (scale + std::abs(t.laplacian))) << c.model;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      auto in_theta = [&](double s) {
        Parameters tp = theta;
        tp[p] += s;
        return fam.value(tp, x);
      };
      EXPECT_NEAR(t.theta_gradient[p], d1(in_theta, h), 1e-7 * scale) << c.model << " theta " << p;
      double lap_p = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        auto mixed = [&](double s) {
          Configuration y = x;
          y[k] += s;
          return fam.evaluate(theta, y, quantity::value | quantity::theta_gradient).theta_gradient[p];
        };
        lap_p += d2(mixed, h);
      }
      EXPECT_NEAR(t.theta_laplacian[p], lap_p, 1e-5 * (scale + std::abs(lap_p))) << c.model << " theta " << p;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Catalog, FamilyDerivatives, ::testing::ValuesIn(cases()), [](const auto& info) {
  return info.param.model + "_" + std::to_string(info.index);
});

TEST(Catalog, EveryEntryBuildsAndValidates) {
  for (const auto& name : models::catalog_names()) {
    const auto e = models::make_model(name);
    EXPECT_EQ(e.model->dimension(), e.family->dimension()) << name;
    EXPECT_EQ(e.default_theta.size(), e.family->parameter_count()) << name;
    EXPECT_FALSE(e.description.empty()) << name;
  }
}

TEST(Catalog, RejectsUnknownNamesAndParameters) {
  EXPECT_THROW(models::make_model("no_such_model"), CatalogError);
  EXPECT_THROW(models::make_model("interval", {{"width", 1.0}}), CatalogError);
  EXPECT_THROW(models::make_model("interval", {{"length", -1.0}}), CatalogError);
  EXPECT_THROW(models::make_model("n_fermion_trap_1d", {{"particles", 2.5}}), CatalogError);
  EXPECT_THROW(models::make_model("n_fermion_trap_1d", {{"particles", 9.0}}), CatalogError);
}

TEST(Catalog, OddMonomialsAreOdd) {
  for (const char* name : {"odd_well3d", "two_fermion_trap"}) {
    const auto e = models::make_model(name);
    ASSERT_TRUE(e.model->group());
    for (std::size_t i = 0; i < 50; ++i) {
      const auto x = halton_point(i, e.model->box());
      for (const auto& s : e.model->group()->elements())
        for (const auto& m : e.odd_monomials) EXPECT_NEAR(m(s.apply(x)), s.parity() * m(x), 1e-9 * (1 + std::abs(m(x)))) << m.name;
    }
  }
}

TEST(Catalog, ExactEnergiesAreLocalEnergies) {
  // at the default θ these trials are exact eigenfunctions, so E_L is the energy everywhere off the node
  for (const char* name : {"harmonic1d", "two_fermion_trap", "odd_well3d", "n_fermion_trap_1d"}) {
    const auto e = models::make_model(name);
    const auto exact = e.exact_fixed_node_energy(e.default_theta);
    ASSERT_TRUE(exact) << name;
    RandomStream rng(5, 0, 0, StreamPurpose::test);
    for (int i = 0; i < 10; ++i) {
      const auto x = random_point(e.model->box(), rng, 0.2);
      EXPECT_NEAR(local_energy(*e.model, *e.family, e.default_theta, x), *exact, 1e-9) << name;
    }
  }
}

TEST(Catalog, IntervalReferenceFollowsTheta) {
  const auto e = models::make_model("interval", {{"theta", 0.25}});
  EXPECT_DOUBLE_EQ(e.default_theta[0], 0.25);
  EXPECT_NEAR(*e.exact_fixed_node_energy(Parameters{0.25}), std::numbers::pi * std::numbers::pi / (2 * 1.5625), 1e-14);
}
