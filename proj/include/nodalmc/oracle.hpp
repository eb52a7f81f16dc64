#pragma once

#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "nodalmc/core.hpp"

namespace nodalmc::oracle {

struct GridSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> counts;  //!< points per axis, box edges included

  //! Grid over the box with spacing as close to h as the box allows.
  static GridSpec uniform(const Box& box, double h) {
    if (!(h > 0)) throw UsageError("grid spacing must be positive");
    GridSpec g;
    for (std::size_t a = 0; a < box.dimension(); ++a) {
      g.lower.push_back(box.lower[a]);
      g.upper.push_back(box.upper[a]);
      g.counts.push_back(static_cast<std::size_t>(std::llround(box.width(a) / h)) + 1);
    }
    g.validate();
    return g;
  }

  std::size_t dimension() const { return counts.size(); }
  double spacing(std::size_t a) const { return (upper[a] - lower[a]) / static_cast<double>(counts[a] - 1); }
  double cell_volume() const {
    double v = 1.0;
    for (std::size_t a = 0; a < dimension(); ++a) v *= spacing(a);
    return v;
  }
  std::size_t total() const {
    std::size_t n = 1;
    for (auto c : counts) n *= c;
    return n;
  }
  //! Row-major: the last axis varies fastest.
  std::size_t stride(std::size_t a) const {
    std::size_t s = 1;
    for (std::size_t b = a + 1; b < dimension(); ++b) s *= counts[b];
    return s;
  }
  std::size_t index_along(std::size_t flat, std::size_t a) const { return (flat / stride(a)) % counts[a]; }
  Configuration point(std::size_t flat) const {
    Configuration x(dimension());
    for (std::size_t a = 0; a < dimension(); ++a) x[a] = lower[a] + static_cast<double>(index_along(flat, a)) * spacing(a);
    return x;
  }

  void validate() const {
    if (counts.empty() || counts.size() > 3) throw UsageError("oracle grids support 1 to 3 dimensions");
    if (lower.size() != counts.size() || upper.size() != counts.size()) throw UsageError("grid bounds do not match dimension");
    for (std::size_t a = 0; a < counts.size(); ++a) {
      if (counts[a] < 16) throw UsageError("grid needs at least 16 points per axis");
      if (!(upper[a] > lower[a])) throw UsageError("grid axis has empty extent");
    }
  }
};

enum class BoundaryTreatment { staircase, linear_ghost };

//! Box domain (family empty) or the positive nodal domain of a trial function.
struct OracleDomain {
  std::shared_ptr<const TrialFamily> family;
  Parameters theta;
  BoundaryTreatment treatment = BoundaryTreatment::staircase;

  static OracleDomain box(BoundaryTreatment t = BoundaryTreatment::staircase) { return {nullptr, {}, t}; }
  static OracleDomain nodal(std::shared_ptr<const TrialFamily> f, Parameters th, BoundaryTreatment t = BoundaryTreatment::staircase) {
    return {std::move(f), th, t};
  }
};

enum class MaskState : std::uint8_t { outside = 0, inside = 1, boundary = 2 };

struct OracleOptions {
  double energy_tol = 1e-10;
  double residual_tol = 1e-8;
  int max_outer = 3000;
  double cg_tol = 1e-11;
  int max_cg = 50000;
  int threads = 1;
};

struct OracleSolution {
  GridSpec grid;
  double energy = 0.0;
  std::vector<double> values;  //!< full grid, zero outside; Σψ²·dV = 1 and ψ > 0 inside
  std::vector<MaskState> mask;
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t components = 0;
  std::size_t inside_count = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// (H_h u)_p on the inside points; outside neighbours carry Dirichlet data through `links`
class MaskedOperator {
 public:
  struct Link {
    std::size_t row;
    double coeff;  //!< rhs += coeff·φ(point)
    Configuration point;
    std::size_t axis;
    int direction;
    std::size_t outside_cell;
  };

  MaskedOperator(const Model& model, const GridSpec& grid, const OracleDomain& domain) : grid_(grid) {
    grid.validate();
    if (grid.dimension() != model.dimension()) throw UsageError("grid dimension does not match model");
    const std::size_t d = grid.dimension(), total = grid.total();
    const double diag_len = model.box().diagonal();
    auto positive = [&](const Configuration& x) {
      if (!domain.family) return true;
      const auto t = domain.family->evaluate(domain.theta, x, quantity::value | quantity::gradient);
      return t.value > node_threshold(norm(t.gradient), diag_len);
    };
    unknown_.assign(total, -1);
    mask_.assign(total, MaskState::outside);
    for (std::size_t c = 0; c < total; ++c) {
      bool edge = false;
      for (std::size_t a = 0; a < d; ++a) {
        const auto i = grid.index_along(c, a);
        edge = edge || i == 0 || i + 1 == grid.counts[a];
      }
      if (edge || !positive(grid.point(c))) continue;
      unknown_[c] = static_cast<std::int64_t>(cells_.size());
      cells_.push_back(c);
      mask_[c] = MaskState::inside;
    }
    if (cells_.empty()) throw DomainError("oracle domain mask is empty");
    const std::size_t n = cells_.size();
    nbr_.assign(n * 2 * d, -1);
    diag_.assign(n, 0.0);
    off_.resize(d);
    for (std::size_t a = 0; a < d; ++a) off_[a] = -0.5 / (grid.spacing(a) * grid.spacing(a));
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c = cells_[r];
      const Configuration x = grid.point(c);
      double dg = model.potential(x);
      for (std::size_t a = 0; a < d; ++a) {
        const double h2 = grid.spacing(a) * grid.spacing(a);
        dg += 1.0 / h2;
        for (int dir = -1; dir <= 1; dir += 2) {
          const std::size_t q = dir < 0 ? c - grid.stride(a) : c + grid.stride(a);
          if (unknown_[q] >= 0) {
            nbr_[(r * d + a) * 2 + (dir > 0)] = unknown_[q];
            continue;
          }
          mask_[q] = MaskState::boundary;
          const Configuration y = grid.point(q);
          double s = 1.0;
          if (domain.family && domain.treatment == BoundaryTreatment::linear_ghost) s = crossing_fraction(*domain.family, domain.theta, x, y);
          // ghost value u_g = u_p + (φ_b − u_p)/s
          dg += (1.0 / s - 1.0) / (2.0 * h2);
          links_.push_back({r, 1.0 / (2.0 * s * h2), lerp(x, y, s), a, dir, q});
        }
      }
      diag_[r] = dg;
    }
  }

  std::size_t size() const { return cells_.size(); }
  const std::vector<std::size_t>& cells() const { return cells_; }
  const std::vector<MaskState>& mask() const { return mask_; }
  const std::vector<double>& diagonal() const { return diag_; }
  const std::vector<Link>& links() const { return links_; }
  std::int64_t unknown_of(std::size_t cell) const { return unknown_[cell]; }
  std::int64_t neighbour(std::size_t row, std::size_t axis, int dir) const {
    return nbr_[(row * grid_.dimension() + axis) * 2 + (dir > 0)];
  }

  //! y = (A − shift) x
  void apply(const std::vector<double>& x, std::vector<double>& y, double shift, int threads) const {
    const std::size_t n = size(), d = grid_.dimension();
    (void)threads;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
    for (std::int64_t ri = 0; ri < static_cast<std::int64_t>(n); ++ri) {
      const auto r = static_cast<std::size_t>(ri);
      double s = (diag_[r] - shift) * x[r];
      const std::int64_t* nb = &nbr_[r * d * 2];
      for (std::size_t a = 0; a < d; ++a) {
        if (nb[2 * a] >= 0) s += off_[a] * x[static_cast<std::size_t>(nb[2 * a])];
        if (nb[2 * a + 1] >= 0) s += off_[a] * x[static_cast<std::size_t>(nb[2 * a + 1])];
      }
      y[r] = s;
    }
  }

  double gershgorin_lower() const {
    const std::size_t d = grid_.dimension();
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < size(); ++r) {
      double rad = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        for (int k = 0; k < 2; ++k)
          if (nbr_[(r * d + a) * 2 + k] >= 0) rad += std::abs(off_[a]);
      lo = std::min(lo, diag_[r] - rad);
    }
    return lo;
  }

  std::size_t count_components() const {
    const std::size_t n = size(), d = grid_.dimension();
    std::vector<char> seen(n, 0);
    std::size_t comps = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
      if (seen[s]) continue;
      ++comps;
      seen[s] = 1;
      stack.push_back(s);
      while (!stack.empty()) {
        const auto r = stack.back();
        stack.pop_back();
        for (std::size_t k = 0; k < 2 * d; ++k) {
          const auto q = nbr_[r * 2 * d + k];
          if (q >= 0 && !seen[static_cast<std::size_t>(q)]) {
            seen[static_cast<std::size_t>(q)] = 1;
            stack.push_back(static_cast<std::size_t>(q));
          }
        }
      }
    }
    return comps;
  }

 private:
  // fraction s ∈ (0, 1] of the segment x → y where ψ changes sign
  static double crossing_fraction(const TrialFamily& f, const Parameters& th, const Configuration& x, const Configuration& y) {
    if (f.value(th, y) > 0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f.value(th, lerp(x, y, mid)) > 0 ? lo : hi) = mid;
    }
    return std::max(0.5 * (lo + hi), 1e-6);
  }

  GridSpec grid_;
  std::vector<std::int64_t> unknown_;
  std::vector<std::size_t> cells_;
  std::vector<MaskState> mask_;
  std::vector<std::int64_t> nbr_;
  std::vector<double> diag_;
  std::vector<double> off_;
  std::vector<Link> links_;
};

inline double dotp(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Jacobi-preconditioned CG for (A − shift) x = b; x holds the initial guess.
inline CgResult conjugate_gradient(const MaskedOperator& op, double shift, const std::vector<double>& b, std::vector<double>& x,
                                   double tol, int max_iter, int threads) {
  const std::size_t n = op.size();
  std::vector<double> r(n), z(n), p(n), ap(n);
  op.apply(x, ap, shift, threads);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  const double bnorm = std::sqrt(dotp(b, b));
  CgResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  const auto& dg = op.diagonal();
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / (dg[i] - shift);
  p = z;
  double rz = dotp(r, z);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    res.relative_residual = std::sqrt(dotp(r, r)) / bnorm;
    if (res.relative_residual < tol) {
      res.converged = true;
      break;
    }
    op.apply(p, ap, shift, threads);
    const double pap = dotp(p, ap);
    if (!(pap > 0)) throw SpectralError("shifted operator is not positive definite");
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / (dg[i] - shift);
    const double rz_new = dotp(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

inline std::vector<double> initial_guess(const MaskedOperator& op, const GridSpec& grid, const OracleDomain& domain,
                                         const std::vector<double>* warm) {
  std::vector<double> v(op.size(), 1.0);
  for (std::size_t r = 0; r < op.size(); ++r) {
    const std::size_t c = op.cells()[r];
    if (warm && (*warm)[c] > 0)
      v[r] = (*warm)[c];
    else if (domain.family)
      v[r] = std::max(domain.family->value(domain.theta, grid.point(c)), 1e-300);
    else if (warm)
      v[r] = 1e-6;
  }
  return v;
}

}  // namespace detail

//! Lowest Dirichlet eigenpair of the masked finite-difference operator by shifted inverse iteration.
//! `warm` is an optional full-grid start vector (e.g. the solution at a nearby θ).
inline OracleSolution solve_dirichlet_groundstate(const Model& model, const GridSpec& grid, const OracleDomain& domain,
                                                  const OracleOptions& options = {}, const std::vector<double>* warm = nullptr) {
  const detail::MaskedOperator op(model, grid, domain);
  const std::size_t n = op.size();
  OracleSolution sol;
  sol.grid = grid;
  sol.mask = op.mask();
  sol.inside_count = n;
  sol.components = op.count_components();

  const double shift = op.gershgorin_lower() - 1e-9;
  std::vector<double> x = detail::initial_guess(op, grid, domain, warm);
  double nx = std::sqrt(detail::dotp(x, x));
  for (auto& v : x) v /= nx;
  std::vector<double> ax(n), y(n);
  double energy = 0.0, prev = std::numeric_limits<double>::infinity();
  double best_residual = std::numeric_limits<double>::infinity();
  for (sol.iterations = 1; sol.iterations <= options.max_outer; ++sol.iterations) {
    op.apply(x, ax, 0.0, options.threads);
    energy = detail::dotp(x, ax);
    double res2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) res2 += (ax[i] - energy * x[i]) * (ax[i] - energy * x[i]);
    sol.residual = std::sqrt(res2);
    best_residual = std::min(best_residual, sol.residual);
    if (std::abs(energy - prev) < options.energy_tol * std::abs(energy) && sol.residual < options.residual_tol) {
      sol.converged = true;
      break;
    }
    prev = energy;
    y = x;
    detail::conjugate_gradient(op, shift, x, y, options.cg_tol, options.max_cg, options.threads);
    nx = std::sqrt(detail::dotp(y, y));
    if (!(nx > 0) || !std::isfinite(nx)) throw SpectralError("inverse iteration broke down");
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / nx;
  }
  if (!sol.converged) {
    sol.iterations = options.max_outer;
    sol.warnings.push_back("inverse iteration stagnated; residual " + std::to_string(sol.residual));
  }
  sol.energy = energy;
  double s = 0.0;
  for (double v : x) s += v;
  const double sign = s < 0 ? -1.0 : 1.0;
  const double scale = sign / std::sqrt(grid.cell_volume());
  sol.values.assign(grid.total(), 0.0);
  for (std::size_t r = 0; r < n; ++r) sol.values[op.cells()[r]] = x[r] * scale;
  return sol;
}

struct FiniteDifferenceGradient {
  std::vector<double> gradient;
  std::vector<double> energy_plus;
  std::vector<double> energy_minus;
  double energy = 0.0;
  std::vector<std::string> warnings;
};

//! Central differences (E(θ+δe_k) − E(θ−δe_k))/(2δ) of the fixed-node grid energy.
inline FiniteDifferenceGradient finite_difference_theta_gradient(const Model& model, std::shared_ptr<const TrialFamily> family,
                                                                  const Parameters& theta, const GridSpec& grid, double delta,
                                                                  BoundaryTreatment treatment = BoundaryTreatment::linear_ghost,
                                                                  const OracleOptions& options = {}) {
  if (!(delta > 0)) throw UsageError("finite-difference step must be positive");
  FiniteDifferenceGradient out;
  const auto base = solve_dirichlet_groundstate(model, grid, OracleDomain::nodal(family, theta, treatment), options);
  out.energy = base.energy;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Parameters tp = theta, tm = theta;
    tp[k] += delta;
    tm[k] -= delta;
    const auto sp = solve_dirichlet_groundstate(model, grid, OracleDomain::nodal(family, tp, treatment), options, &base.values);
    const auto sm = solve_dirichlet_groundstate(model, grid, OracleDomain::nodal(family, tm, treatment), options, &base.values);
    out.energy_plus.push_back(sp.energy);
    out.energy_minus.push_back(sm.energy);
    out.gradient.push_back((sp.energy - sm.energy) / (2.0 * delta));
    if (sp.components != sm.components)
      out.warnings.push_back("nodal mask topology changes along parameter " + std::to_string(k + 1) + " (" +
                             std::to_string(sm.components) + " vs " + std::to_string(sp.components) + " components)");
    for (const auto* s : {&sp, &sm})
      if (!s->converged) out.warnings.push_back("a shifted solve did not converge");
  }
  return out;
}

struct ExitFunctionalResult {
  std::vector<double> values;  //!< h on the grid, boundary cells carry φ
  double functional = 0.0;     //!< Σ h ψ* / Σ ψ*
  double groundstate_energy = 0.0;
};

//! Solves (H_h − λ)h = 0 with Dirichlet data φ and averages h against the groundstate density.
inline ExitFunctionalResult solve_exit_functional(const Model& model, const GridSpec& grid, const OracleDomain& domain, double lambda,
                                                  const std::function<double(const Configuration&)>& phi, const OracleSolution* groundstate = nullptr,
                                                  const OracleOptions& options = {}) {
  OracleSolution own;
  if (!groundstate) {
    own = solve_dirichlet_groundstate(model, grid, domain, options);
    groundstate = &own;
  }
  ExitFunctionalResult out;
  out.groundstate_energy = groundstate->energy;
  if (!(lambda < groundstate->energy))
    throw SpectralError("lambda " + std::to_string(lambda) + " is not below the grid groundstate energy " + std::to_string(groundstate->energy));
  const detail::MaskedOperator op(model, grid, domain);
  std::vector<double> b(op.size(), 0.0), h(op.size(), 0.0);
  for (const auto& l : op.links()) b[l.row] += l.coeff * phi(l.point);
  const auto cg = detail::conjugate_gradient(op, lambda, b, h, 1e-13, options.max_cg, options.threads);
  if (!cg.converged && cg.relative_residual > 1e-9) throw SpectralError("exit functional solve did not converge");
  out.values.assign(grid.total(), 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < op.size(); ++r) {
    const std::size_t c = op.cells()[r];
    out.values[c] = h[r];
    num += h[r] * groundstate->values[c];
    den += groundstate->values[c];
  }
  for (const auto& l : op.links()) out.values[l.outside_cell] = phi(grid.point(l.outside_cell));
  out.functional = num / den;
  return out;
}

//! Right-hand side of the hitting identity from one-sided normal derivatives on the grid-box faces.
//! Only meaningful for box domains (axis-aligned boundary).
inline double boundary_flux_functional(const Model& model, const OracleSolution& sol, double lambda,
                                       const std::function<double(const Configuration&)>& phi) {
  const detail::MaskedOperator op(model, sol.grid, OracleDomain::box());
  const auto& g = sol.grid;
  double flux = 0.0;
  for (const auto& l : op.links()) {
    const std::size_t c = op.cells()[l.row];
    const double h = g.spacing(l.axis);
    const auto inner = op.neighbour(l.row, l.axis, -l.direction);
    double dn;
    if (inner >= 0)
      dn = (-4.0 * sol.values[c] + sol.values[op.cells()[static_cast<std::size_t>(inner)]]) / (2.0 * h);
    else
      dn = -sol.values[c] / h;
    double area = 1.0;
    for (std::size_t a = 0; a < g.dimension(); ++a)
      if (a != l.axis) area *= g.spacing(a);
    flux += phi(g.point(l.outside_cell)) * dn * area;
  }
  double integral = 0.0;
  for (double v : sol.values) integral += v;
  integral *= g.cell_volume();
  return -flux / (2.0 * (sol.energy - lambda) * integral);
}

//! max |ψ(Sx) − ψ(x)| / max|ψ| over the even subgroup; the grid must map onto itself.
inline double even_subgroup_asymmetry(const OracleSolution& sol, const SymmetryGroup& group) {
  const auto& g = sol.grid;
  double vmax = 0.0;
  for (double v : sol.values) vmax = std::max(vmax, std::abs(v));
  double worst = 0.0;
  for (const auto& s : group.even_subgroup()) {
    for (std::size_t c = 0; c < g.total(); ++c) {
      const Configuration y = s.apply(g.point(c));
      std::size_t flat = 0;
      for (std::size_t a = 0; a < g.dimension(); ++a) {
        const double f = (y[a] - g.lower[a]) / g.spacing(a);
        const double r = std::round(f);
        if (std::abs(f - r) > 1e-6 || r < 0 || r > static_cast<double>(g.counts[a] - 1))
          throw UsageError("grid is not aligned with the symmetry group");
        flat += static_cast<std::size_t>(r) * g.stride(a);
      }
      worst = std::max(worst, std::abs(sol.values[flat] - sol.values[c]));
    }
  }
  return vmax > 0 ? worst / vmax : 0.0;
}

// ---------------------------------------------------------------------------
// closed forms for the interval

struct IntervalReference {
  double left = 0.0, length = 1.0;
  double energy = 0.0;
  double normal_derivative_left = 0.0;   //!< ∇ψ*·n with ψ* = sin(π(x−a)/L)
  double normal_derivative_right = 0.0;
  double integral_psi = 0.0;             //!< ∫ψ* = 2L/π
  double denergy_dtheta = 0.0;
  std::vector<double> mu_functionals;
};

inline IntervalReference analytic_interval_reference(double left, double length, bool symmetric, double theta, double lambda,
                                                     const std::vector<std::function<double(double)>>& phis = {}) {
  using std::numbers::pi;
  IntervalReference r;
  r.left = left - (symmetric ? theta : 0.0);
  r.length = length + (symmetric ? 2.0 : 1.0) * theta;
  const double l = r.length;
  if (!(l > 0)) throw UsageError("interval length must be positive");
  r.energy = pi * pi / (2.0 * l * l);
  r.normal_derivative_left = -pi / l;
  r.normal_derivative_right = -pi / l;
  r.integral_psi = 2.0 * l / pi;
  r.denergy_dtheta = -(symmetric ? 2.0 : 1.0) * pi * pi / (l * l * l);
  if (!(lambda < r.energy)) throw SpectralError("lambda must lie below the interval groundstate energy");
  for (const auto& phi : phis) {
    const double flux = phi(r.left) * r.normal_derivative_left + phi(r.left + l) * r.normal_derivative_right;
    r.mu_functionals.push_back(-flux / (2.0 * (r.energy - lambda) * r.integral_psi));
  }
  return r;
}

// ---------------------------------------------------------------------------
// dump

//! Binary layout (little-endian): "NODALMC1", uint32 dims, per axis {uint64 count, f64 lower, f64 upper},
//! f64 energy, then ψ as f64 row-major (last axis fastest). A JSON sidecar repeats the header.
inline void write_grid_solution(const OracleSolution& sol, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("NODALMC1", 8);
  const auto dims = static_cast<std::uint32_t>(sol.grid.dimension());
  out.write(reinterpret_cast<const char*>(&dims), sizeof dims);
  for (std::size_t a = 0; a < dims; ++a) {
    const auto c = static_cast<std::uint64_t>(sol.grid.counts[a]);
    out.write(reinterpret_cast<const char*>(&c), sizeof c);
    out.write(reinterpret_cast<const char*>(&sol.grid.lower[a]), sizeof(double));
    out.write(reinterpret_cast<const char*>(&sol.grid.upper[a]), sizeof(double));
  }
  out.write(reinterpret_cast<const char*>(&sol.energy), sizeof(double));
  out.write(reinterpret_cast<const char*>(sol.values.data()), static_cast<std::streamsize>(sol.values.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path);

  nlohmann::ordered_json j;
  j["format"] = "NODALMC1";
  j["byte_order"] = "little";
  j["dtype"] = "float64";
  j["order"] = "row-major, last axis fastest";
  j["counts"] = sol.grid.counts;
  j["lower"] = sol.grid.lower;
  j["upper"] = sol.grid.upper;
  j["energy"] = sol.energy;
  j["residual"] = sol.residual;
  j["converged"] = sol.converged;
  j["data_offset_bytes"] = 8 + 4 + dims * 24 + 8;
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot write " + path + ".json");
  side << j.dump(2) << '\n';
}

}  // namespace nodalmc::oracle
