#pragma once

#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "nodalmc/core.hpp"

namespace nodalmc::models {

namespace detail {

// P·G with G = exp(−½ Σ ωᵢxᵢ²):
//   ∇(PG) = G(∇P − P ω∘x),  Δ(PG) = G[ΔP − 2(ω∘x)·∇P + P Σ(ωᵢ²xᵢ² − ωᵢ)]
struct GaussianProduct {
  double value;
  Configuration gradient;
  double laplacian;
};

inline double gaussian_envelope(const Configuration& omega, const Configuration& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += omega[i] * x[i] * x[i];
  return std::exp(-0.5 * s);
}

inline GaussianProduct times_gaussian(double g, const Configuration& omega, const Configuration& x, double p,
                                      const Configuration& grad_p, double lap_p) {
  GaussianProduct r{g * p, Configuration(x.size()), 0.0};
  double wx_dot_grad = 0.0, curv = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wx = omega[i] * x[i];
    r.gradient[i] = g * (grad_p[i] - p * wx);
    wx_dot_grad += wx * grad_p[i];
    curv += wx * wx - omega[i];
  }
  r.laplacian = g * (lap_p - 2.0 * wx_dot_grad + p * curv);
  return r;
}

inline double determinant(std::vector<double> a, std::size_t n) {
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (a[piv * n + c] == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      det = -det;
    }
    det *= a[c * n + c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
    }
  }
  return det;
}

}  // namespace detail

// ---------------------------------------------------------------------------

//! sin(π(x − a_θ)/L_θ) on Ω_θ = (a_θ, a_θ + L_θ).
//! Right-end motion: a_θ = a, L_θ = L + θ. Symmetric motion: both ends move outward by θ.
class IntervalFamily final : public TrialFamily {
 public:
  IntervalFamily(double left, double length, bool symmetric) : a_(left), l_(length), s_(symmetric ? 1.0 : 0.0) {}

  std::string name() const override { return s_ > 0 ? "interval_symmetric_sine" : "interval_sine"; }
  std::size_t dimension() const override { return 1; }
  std::size_t parameter_count() const override { return 1; }

  double left(double theta) const { return a_ - s_ * theta; }
  double length(double theta) const { return l_ + (1.0 + s_) * theta; }
  bool symmetric() const { return s_ > 0; }

  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    const double a = left(theta[0]), len = length(theta[0]);
    if (!(len > 0)) throw UsageError("interval length must stay positive");
    const double k = std::numbers::pi / len;
    const double u = k * (x[0] - a);
    const double su = std::sin(u), cu = std::cos(u);
    TrialEvaluation t;
    t.value = su;
    if (what & quantity::gradient) t.gradient = Configuration{k * cu};
    if (what & quantity::laplacian) t.laplacian = -k * k * su;
    if (what & (quantity::theta_gradient | quantity::theta_laplacian)) {
      // u_θ = π(−a′L − (x − a)L′)/L², affine in x with slope q′
      const double da = -s_, dl = 1.0 + s_;
      const double q = std::numbers::pi * (-da * len - (x[0] - a) * dl) / (len * len);
      const double dq = -std::numbers::pi * dl / (len * len);
      t.theta_gradient = Parameters{cu * q};
      t.theta_laplacian = Parameters{-cu * k * k * q - 2.0 * su * k * dq};
    }
    return t;
  }

 private:
  double a_, l_, s_;
};

//! exp(−(1+θ)x²/2)
class HarmonicFamily final : public TrialFamily {
 public:
  std::string name() const override { return "harmonic_gaussian"; }
  std::size_t dimension() const override { return 1; }
  std::size_t parameter_count() const override { return 1; }

  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    const double a = 1.0 + theta[0], x0 = x[0], x2 = x0 * x0;
    const double psi = std::exp(-0.5 * a * x2);
    TrialEvaluation t;
    t.value = psi;
    if (what & quantity::gradient) t.gradient = Configuration{-a * x0 * psi};
    if (what & quantity::laplacian) t.laplacian = (a * a * x2 - a) * psi;
    if (what & (quantity::theta_gradient | quantity::theta_laplacian)) {
      t.theta_gradient = Parameters{-0.5 * x2 * psi};
      t.theta_laplacian = Parameters{-0.5 * psi * (2.0 - 5.0 * a * x2 + a * a * x2 * x2)};
    }
    return t;
  }
};

//! (x₁ − x₂)(1 + θ(x₁ + x₂))·exp(−(x₁² + x₂²)/2)
class TwoFermionFamily final : public TrialFamily {
 public:
  std::string name() const override { return "two_fermion_slater"; }
  std::size_t dimension() const override { return 2; }
  std::size_t parameter_count() const override { return 1; }

  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    static const Configuration omega{1.0, 1.0};
    const double th = theta[0], a = x[0], b = x[1];
    const double g = detail::gaussian_envelope(omega, x);
    // P = (a − b) + θ(a² − b²), ΔP = 0
    const double p = (a - b) * (1.0 + th * (a + b));
    const auto f = detail::times_gaussian(g, omega, x, p, Configuration{1.0 + 2.0 * th * a, -1.0 - 2.0 * th * b}, 0.0);
    TrialEvaluation t;
    t.value = f.value;
    t.gradient = f.gradient;
    t.laplacian = f.laplacian;
    if (what & (quantity::theta_gradient | quantity::theta_laplacian)) {
      const auto q = detail::times_gaussian(g, omega, x, a * a - b * b, Configuration{2.0 * a, -2.0 * b}, 0.0);
      t.theta_gradient = Parameters{q.value};
      t.theta_laplacian = Parameters{q.laplacian};
    }
    return t;
  }
};

//! (x + θ₁y + θ₂z)·exp(−(x² + 2y² + 3z²)/2)
class OddWellFamily final : public TrialFamily {
 public:
  std::string name() const override { return "odd_well_tilted_plane"; }
  std::size_t dimension() const override { return 3; }
  std::size_t parameter_count() const override { return 2; }

  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    static const Configuration omega{1.0, 2.0, 3.0};
    const double g = detail::gaussian_envelope(omega, x);
    const double p = x[0] + theta[0] * x[1] + theta[1] * x[2];
    TrialEvaluation t;
    if (what == quantity::value) {
      t.value = g * p;
      return t;
    }
    const auto f = detail::times_gaussian(g, omega, x, p, Configuration{1.0, theta[0], theta[1]}, 0.0);
    t.value = f.value;
    t.gradient = f.gradient;
    t.laplacian = f.laplacian;
    if (what & (quantity::theta_gradient | quantity::theta_laplacian)) {
      const auto qy = detail::times_gaussian(g, omega, x, x[1], Configuration{0.0, 1.0, 0.0}, 0.0);
      const auto qz = detail::times_gaussian(g, omega, x, x[2], Configuration{0.0, 0.0, 1.0}, 0.0);
      t.theta_gradient = Parameters{qy.value, qz.value};
      t.theta_laplacian = Parameters{qy.laplacian, qz.laplacian};
    }
    return t;
  }
};

//! N particles in 1D: det[pⱼ(xᵢ)]·exp(−αΣ_{i<j}(xᵢ−xⱼ)² − |x|²/2) with monomial orbitals
//! pⱼ = xʲ (equivalent to the Hermite-Gaussian Slater determinant up to a constant) and
//! the top orbital deformed to x^{N−1} + θx^N.
class SlaterJastrowFamily final : public TrialFamily {
 public:
  SlaterJastrowFamily(std::size_t n, double alpha) : n_(n), alpha_(alpha) {
    if (n < 2 || n > 5) throw UsageError("n_fermion_trap_1d supports 2 to 5 particles");
  }

  std::string name() const override { return "slater_jastrow_1d"; }
  std::size_t dimension() const override { return n_; }
  std::size_t parameter_count() const override { return 1; }

  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    // log of the symmetric factor
    double k = 0.0;
    Configuration dk(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      k -= 0.5 * x[i] * x[i];
      dk[i] = -x[i];
      for (std::size_t j = 0; j < n_; ++j) {
        if (j == i) continue;
        dk[i] -= 2.0 * alpha_ * (x[i] - x[j]);
        if (j > i) k -= alpha_ * (x[i] - x[j]) * (x[i] - x[j]);
      }
    }
    const double lap_k = -static_cast<double>(n_) * (2.0 * alpha_ * static_cast<double>(n_ - 1) + 1.0);
    const double ek = std::exp(k);
    const double curv = lap_k + dot(dk, dk);

    auto combine = [&](const Determinant& d) {
      TrialEvaluation r;
      r.value = ek * d.value;
      r.gradient = Configuration(n_);
      double cross = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        r.gradient[i] = ek * (d.gradient[i] + d.value * dk[i]);
        cross += dk[i] * d.gradient[i];
      }
      r.laplacian = ek * (d.laplacian + 2.0 * cross + d.value * curv);
      return r;
    };

    TrialEvaluation t = combine(slater(x, theta[0], false));
    if (what & (quantity::theta_gradient | quantity::theta_laplacian)) {
      const auto q = combine(slater(x, theta[0], true));
      t.theta_gradient = Parameters{q.value};
      t.theta_laplacian = Parameters{q.laplacian};
    }
    return t;
  }

 private:
  struct Determinant {
    double value;
    Configuration gradient;
    double laplacian;
  };

  // orbital j at x, derivative order 0..2; `deformation` swaps the top orbital for x^N
  double orbital(std::size_t j, double x, int order, double theta, bool deformation) const {
    auto mono = [&](std::size_t p) {
      if (order == 0) return std::pow(x, static_cast<double>(p));
      if (order == 1) return p >= 1 ? static_cast<double>(p) * std::pow(x, static_cast<double>(p - 1)) : 0.0;
      return p >= 2 ? static_cast<double>(p * (p - 1)) * std::pow(x, static_cast<double>(p - 2)) : 0.0;
    };
    if (j + 1 < n_) return mono(j);
    if (deformation) return mono(n_);
    return mono(n_ - 1) + theta * mono(n_);
  }

  Determinant slater(const Configuration& x, double theta, bool deformation) const {
    std::vector<double> m(n_ * n_);
    auto fill = [&](std::size_t row_override, int order) {
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j) m[i * n_ + j] = orbital(j, x[i], i == row_override ? order : 0, theta, deformation);
    };
    Determinant d{0.0, Configuration(n_), 0.0};
    fill(n_, 0);
    d.value = detail::determinant(m, n_);
    for (std::size_t i = 0; i < n_; ++i) {
      fill(i, 1);
      d.gradient[i] = detail::determinant(m, n_);
      fill(i, 2);
      d.laplacian += detail::determinant(m, n_);
    }
    return d;
  }

  std::size_t n_;
  double alpha_;
};

// ---------------------------------------------------------------------------

struct Reference {
  std::string name;
  double value;
  std::string provenance;
};

struct PropagationDefaults {
  std::size_t walkers = 5000;
  double dt = 1e-3;
  double total_time = 3.0;
  std::string init = "uniform_box";
};

struct ModelCatalogEntry {
  std::string name;
  std::string description;
  std::shared_ptr<const Model> model;
  std::shared_ptr<const TrialFamily> family;
  Parameters default_theta;
  std::map<std::string, double> parameters;
  std::vector<NamedFunction> odd_monomials;
  std::vector<Reference> references;
  PropagationDefaults propagation;
  double grid_spacing = 0.05;
  //! Closed-form fixed-node energy where one exists.
  std::function<std::optional<double>(const Parameters&)> exact_fixed_node_energy = [](const Parameters&) {
    return std::optional<double>{};
  };
  bool experimental = false;

  TrialEvaluation evaluate_trial(const Parameters& theta, const Configuration& x, unsigned what = quantity::all) const {
    return family->evaluate(theta, x, what);
  }
};

namespace detail {

inline std::map<std::string, double> resolve(const std::string& model, std::map<std::string, double> defaults,
                                             const std::map<std::string, double>& given) {
  for (const auto& [k, v] : given) {
    if (k == "theta") continue;
    if (!defaults.count(k)) throw CatalogError("model '" + model + "' has no parameter '" + k + "'");
    defaults[k] = v;
  }
  return defaults;
}

inline Parameters theta_from(const std::map<std::string, double>& given, Parameters fallback) {
  if (auto it = given.find("theta"); it != given.end()) {
    if (fallback.size() != 1) throw CatalogError("scalar theta given for a multi-parameter family");
    fallback[0] = it->second;
  }
  return fallback;
}

}  // namespace detail

inline std::vector<std::string> catalog_names() {
  return {"interval", "harmonic1d", "two_fermion_trap", "odd_well3d", "n_fermion_trap_1d", "two_fermion_trap_interacting"};
}

inline ModelCatalogEntry make_model(const std::string& name, const std::map<std::string, double>& given = {}) {
  using std::numbers::pi;
  ModelCatalogEntry e;
  e.name = name;

  if (name == "interval") {
    e.parameters = detail::resolve(name, {{"left", 0.0}, {"length", 1.0}, {"symmetric", 0.0}}, given);
    const double a = e.parameters["left"], len = e.parameters["length"];
    const bool sym = e.parameters["symmetric"] != 0.0;
    if (!(len > 0)) throw CatalogError("interval length must be positive");
    auto fam = std::make_shared<IntervalFamily>(a, len, sym);
    e.description = "free particle on an interval with Dirichlet ends; theta moves the right end (or both ends when symmetric=1)";
    e.model = std::make_shared<Model>(name, 1, [](const Configuration&) { return 0.0; },
                                      Box{Configuration{a - 0.5 * len}, Configuration{a + 1.5 * len}}, std::nullopt, 0.0);
    e.family = fam;
    e.default_theta = detail::theta_from(given, Parameters{0.0});
    e.propagation = {5000, 2.5e-4, 3.0, "uniform_box"};
    e.grid_spacing = 0.005;
    e.exact_fixed_node_energy = [fam](const Parameters& th) {
      const double l = fam->length(th[0]);
      return std::optional<double>(pi * pi / (2.0 * l * l));
    };
    const double l0 = fam->length(e.default_theta[0]);
    e.references = {{"energy", pi * pi / (2.0 * l0 * l0), "analytic principal Dirichlet eigenvalue pi^2/(2L^2)"},
                    {"denergy_dtheta", -(sym ? 2.0 : 1.0) * pi * pi / (l0 * l0 * l0), "analytic derivative of pi^2/(2L^2)"}};
  } else if (name == "harmonic1d") {
    e.parameters = detail::resolve(name, {}, given);
    e.description = "harmonic oscillator on the line; no nodes, drifted-mode testbed";
    e.model = std::make_shared<Model>(name, 1, [](const Configuration& x) { return 0.5 * x[0] * x[0]; }, Box::cube(1, -8.0, 8.0),
                                      std::nullopt, 0.0);
    e.family = std::make_shared<HarmonicFamily>();
    e.default_theta = detail::theta_from(given, Parameters{0.0});
    e.propagation = {5000, 1e-3, 3.0, "trial"};
    e.grid_spacing = 0.02;
    e.references = {{"energy", 0.5, "analytic oscillator groundstate"}};
    e.exact_fixed_node_energy = [](const Parameters&) { return std::optional<double>(0.5); };
  } else if (name == "two_fermion_trap" || name == "two_fermion_trap_interacting") {
    const bool interacting = name == "two_fermion_trap_interacting";
    e.parameters = interacting ? detail::resolve(name, {{"strength", 1.0}, {"width", 0.5}}, given) : detail::resolve(name, {}, given);
    PotentialFunction v = [](const Configuration& x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
    if (interacting) {
      const double g = e.parameters["strength"], w = e.parameters["width"];
      if (!(w > 0)) throw CatalogError("interaction width must be positive");
      v = [g, w](const Configuration& x) {
        const double r = x[0] - x[1];
        return 0.5 * (x[0] * x[0] + x[1] * x[1]) + g * std::exp(-r * r / (2.0 * w * w));
      };
    }
    const double vmin = interacting ? std::min(0.0, e.parameters["strength"]) : 0.0;
    e.model = std::make_shared<Model>(name, 2, v, Box::cube(2, -5.0, 5.0), SymmetryGroup::permutations(2), vmin);
    e.family = std::make_shared<TwoFermionFamily>();
    e.default_theta = detail::theta_from(given, Parameters{0.0});
    e.propagation = {5000, 1e-3, 3.0, "trial"};
    e.grid_spacing = 0.05;
    e.odd_monomials = {
        {"x1-x2", [](const Configuration& x) { return x[0] - x[1]; }},
        {"(x1-x2)^3", [](const Configuration& x) { return std::pow(x[0] - x[1], 3); }},
        {"(x1-x2)(x1+x2)", [](const Configuration& x) { return (x[0] - x[1]) * (x[0] + x[1]); }},
    };
    if (interacting) {
      e.description = "two spin-polarized fermions in a harmonic trap with Gaussian repulsion (experimental, oracle references only)";
      e.experimental = true;
    } else {
      e.description = "two spin-polarized fermions in a 1D harmonic trap; coincidence node fixed by symmetry";
      e.references = {{"energy", 2.0, "analytic: orbitals n=0,1 of the oscillator"}};
      e.exact_fixed_node_energy = [](const Parameters&) { return std::optional<double>(2.0); };
    }
  } else if (name == "odd_well3d") {
    e.parameters = detail::resolve(name, {}, given);
    e.description = "anisotropic 3D oscillator (omega = 1, 2, 3) with inversion symmetry; tilted nodal plane";
    e.model = std::make_shared<Model>(
        name, 3, [](const Configuration& x) { return 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1] + 9.0 * x[2] * x[2]); },
        Box::cube(3, -6.0, 6.0), SymmetryGroup::inversion(3), 0.0);
    e.family = std::make_shared<OddWellFamily>();
    e.default_theta = Parameters{0.0, 0.0};
    e.propagation = {20000, 1e-3, 3.0, "trial"};
    e.grid_spacing = 0.15;
    e.odd_monomials = {
        {"y", [](const Configuration& x) { return x[1]; }},
        {"z", [](const Configuration& x) { return x[2]; }},
        {"y^3", [](const Configuration& x) { return x[1] * x[1] * x[1]; }},
        {"z^3", [](const Configuration& x) { return x[2] * x[2] * x[2]; }},
        {"y^2z", [](const Configuration& x) { return x[1] * x[1] * x[2]; }},
        {"yz^2", [](const Configuration& x) { return x[1] * x[2] * x[2]; }},
    };
    e.references = {{"energy", 4.0, "analytic: sum (n_i + 1/2) omega_i with n = (1,0,0)"}};
    e.exact_fixed_node_energy = [](const Parameters& th) {
      return th[0] == 0.0 && th[1] == 0.0 ? std::optional<double>(4.0) : std::optional<double>{};
    };
  } else if (name == "n_fermion_trap_1d") {
    e.parameters = detail::resolve(name, {{"particles", 3.0}, {"alpha", 0.0}}, given);
    const double np = e.parameters["particles"];
    if (np != std::floor(np)) throw CatalogError("particles must be an integer");
    const auto n = static_cast<std::size_t>(np);
    if (n < 2 || n > 5) throw CatalogError("n_fermion_trap_1d supports 2 to 5 particles");
    e.description = "N spin-polarized fermions in a 1D harmonic trap; Slater determinant with Gaussian pair Jastrow";
    e.model = std::make_shared<Model>(
        name, n,
        [](const Configuration& x) {
          double s = 0.0;
          for (double v : x) s += 0.5 * v * v;
          return s;
        },
        Box::cube(n, -6.0, 6.0), SymmetryGroup::permutations(n), 0.0);
    e.family = std::make_shared<SlaterJastrowFamily>(n, e.parameters["alpha"]);
    e.default_theta = detail::theta_from(given, Parameters{0.0});
    e.propagation = {5000, 1e-3, 3.0, "trial"};
    e.grid_spacing = 0.1;
    e.references = {{"energy", 0.5 * np * np, "analytic: sum of the lowest N oscillator levels"}};
    e.exact_fixed_node_energy = [np](const Parameters&) { return std::optional<double>(0.5 * np * np); };
  } else {
    throw CatalogError("unknown model '" + name + "'");
  }

  if (e.default_theta.size() != e.family->parameter_count())
    throw CatalogError("theta for model '" + name + "' must have " + std::to_string(e.family->parameter_count()) + " components");
  validate_family(*e.model, *e.family, e.default_theta);
  return e;
}

}  // namespace nodalmc::models
