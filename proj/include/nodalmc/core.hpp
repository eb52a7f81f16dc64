#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nodalmc {

// ---------------------------------------------------------------------------
// errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define NODALMC_ERROR(Name)                 \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

NODALMC_ERROR(UsageError)
NODALMC_ERROR(ConfigError)
NODALMC_ERROR(CatalogError)
NODALMC_ERROR(NodeProximityError)
NODALMC_ERROR(DegenerateNodeError)
NODALMC_ERROR(ExtinctionError)
NODALMC_ERROR(DomainError)
NODALMC_ERROR(SpectralError)
NODALMC_ERROR(IllConditionedError)
NODALMC_ERROR(StatisticalError)
NODALMC_ERROR(IoError)

#undef NODALMC_ERROR

// ---------------------------------------------------------------------------
// small fixed-capacity vectors; walkers copy positions every step, so no heap

inline constexpr std::size_t kMaxDimension = 12;
inline constexpr std::size_t kMaxParameters = 8;

template <class Tag, std::size_t Capacity>
class FixedVector {
 public:
  FixedVector() = default;

  explicit FixedVector(std::size_t n, double fill = 0.0) : size_(n) {
    if (n > Capacity) throw UsageError("vector length " + std::to_string(n) + " exceeds capacity " + std::to_string(Capacity));
    std::fill_n(data_.begin(), n, fill);
  }

  FixedVector(std::initializer_list<double> values) : FixedVector(std::span<const double>(values.begin(), values.size())) {}

  explicit FixedVector(std::span<const double> values) : FixedVector(values.size()) {
    std::copy(values.begin(), values.end(), data_.begin());
  }

  static constexpr std::size_t capacity() { return Capacity; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* begin() { return data_.data(); }
  double* end() { return data_.data() + size_; }
  const double* begin() const { return data_.data(); }
  const double* end() const { return data_.data() + size_; }

  std::span<const double> span() const { return {data_.data(), size_}; }
  std::vector<double> to_vector() const { return {begin(), end()}; }

  friend bool operator==(const FixedVector& a, const FixedVector& b) {
    return a.size_ == b.size_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  std::array<double, Capacity> data_{};
  std::size_t size_ = 0;
};

struct PositionTag;
struct ParameterTag;

//! A point of R^d. Gradients with respect to x share the type.
using Configuration = FixedVector<PositionTag, kMaxDimension>;
//! A point of parameter space, also used for θ-gradients.
using Parameters = FixedVector<ParameterTag, kMaxParameters>;

template <class V>
double dot(const V& a, const V& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class V>
double norm(const V& a) {
  return std::sqrt(dot(a, a));
}

template <class V>
bool all_finite(const V& a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline Configuration lerp(const Configuration& a, const Configuration& b, double t) {
  Configuration r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + t * (b[i] - a[i]);
  return r;
}

// ---------------------------------------------------------------------------
// symmetry

class SymmetryOperation {
 public:
  static SymmetryOperation identity(std::size_t d) {
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    return permutation(perm);
  }

  //! x -> -x, parity (-1)^d.
  static SymmetryOperation inversion(std::size_t d) {
    SymmetryOperation op(d);
    for (std::size_t i = 0; i < d; ++i) op.m_[i * d + i] = -1.0;
    op.parity_ = (d % 2 == 0) ? 1 : -1;
    return op;
  }

  //! (Sx)_i = x_{perm[i]}.
  static SymmetryOperation permutation(const std::vector<std::size_t>& perm) {
    const std::size_t d = perm.size();
    SymmetryOperation op(d);
    std::vector<bool> seen(d, false);
    for (std::size_t i = 0; i < d; ++i) {
      if (perm[i] >= d || seen[perm[i]]) throw UsageError("not a permutation");
      seen[perm[i]] = true;
      op.m_[i * d + perm[i]] = 1.0;
    }
    int sign = 1;
    std::vector<bool> visited(d, false);
    for (std::size_t i = 0; i < d; ++i) {
      if (visited[i]) continue;
      std::size_t len = 0;
      for (std::size_t j = i; !visited[j]; j = perm[j]) {
        visited[j] = true;
        ++len;
      }
      if (len % 2 == 0) sign = -sign;
    }
    op.parity_ = sign;
    return op;
  }

  //! General orthogonal matrix, row-major. Determinant computed once here.
  static SymmetryOperation from_matrix(std::size_t d, std::vector<double> m) {
    if (m.size() != d * d) throw UsageError("matrix size does not match dimension");
    SymmetryOperation op(d);
    op.m_ = std::move(m);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += op.m_[k * d + i] * op.m_[k * d + j];
        if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-12) throw UsageError("symmetry matrix is not orthogonal");
      }
    op.parity_ = determinant(op.m_, d) > 0 ? 1 : -1;
    return op;
  }

  std::size_t dimension() const { return d_; }
  int parity() const { return parity_; }
  double operator()(std::size_t i, std::size_t j) const { return m_[i * d_ + j]; }
  const std::vector<double>& matrix() const { return m_; }

  Configuration apply(const Configuration& x) const {
    if (x.size() != d_) throw UsageError("symmetry dimension " + std::to_string(d_) + " does not match configuration dimension " + std::to_string(x.size()));
    Configuration y(d_);
    for (std::size_t i = 0; i < d_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d_; ++j) s += m_[i * d_ + j] * x[j];
      y[i] = s;
    }
    return y;
  }

  //! (this ∘ other)(x) = this(other(x))
  SymmetryOperation compose(const SymmetryOperation& other) const {
    if (other.d_ != d_) throw UsageError("cannot compose symmetries of different dimension");
    SymmetryOperation r(d_);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d_; ++k) s += m_[i * d_ + k] * other.m_[k * d_ + j];
        r.m_[i * d_ + j] = s;
      }
    r.parity_ = parity_ * other.parity_;
    return r;
  }

  SymmetryOperation inverse() const {
    SymmetryOperation r(d_);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j) r.m_[i * d_ + j] = m_[j * d_ + i];
    r.parity_ = parity_;
    return r;
  }

  bool approx_equal(const SymmetryOperation& other, double tol = 1e-12) const {
    if (other.d_ != d_) return false;
    for (std::size_t i = 0; i < m_.size(); ++i)
      if (std::abs(m_[i] - other.m_[i]) > tol) return false;
    return true;
  }

  bool is_identity(double tol = 1e-12) const { return approx_equal(identity(d_), tol); }
  bool is_involution(double tol = 1e-12) const { return compose(*this).is_identity(tol); }

 private:
  explicit SymmetryOperation(std::size_t d) : d_(d), m_(d * d, 0.0) {}

  static double determinant(std::vector<double> a, std::size_t n) {
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

  std::size_t d_ = 0;
  std::vector<double> m_;
  int parity_ = 1;
};

inline Configuration apply_symmetry(const SymmetryOperation& op, const Configuration& x) { return op.apply(x); }

class SymmetryGroup {
 public:
  explicit SymmetryGroup(std::vector<SymmetryOperation> elements) : elements_(std::move(elements)) {
    if (elements_.empty()) throw UsageError("symmetry group is empty");
    const std::size_t d = elements_.front().dimension();
    for (const auto& e : elements_)
      if (e.dimension() != d) throw UsageError("symmetry group elements have mixed dimensions");
    if (!contains(SymmetryOperation::identity(d))) throw UsageError("symmetry group lacks the identity");
    for (const auto& a : elements_) {
      if (!contains(a.inverse())) throw UsageError("symmetry group is not closed under inversion");
      for (const auto& b : elements_)
        if (!contains(a.compose(b))) throw UsageError("symmetry group is not closed under composition");
    }
    if (std::none_of(elements_.begin(), elements_.end(), [](const auto& e) { return e.parity() < 0; }))
      throw UsageError("symmetry group has no parity -1 element");
  }

  //! All permutations of n coordinates.
  static SymmetryGroup permutations(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<SymmetryOperation> ops;
    do ops.push_back(SymmetryOperation::permutation(perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    return SymmetryGroup(std::move(ops));
  }

  static SymmetryGroup inversion(std::size_t d) {
    return SymmetryGroup({SymmetryOperation::identity(d), SymmetryOperation::inversion(d)});
  }

  std::size_t dimension() const { return elements_.front().dimension(); }
  std::size_t size() const { return elements_.size(); }
  const std::vector<SymmetryOperation>& elements() const { return elements_; }

  std::vector<SymmetryOperation> even_subgroup() const {
    std::vector<SymmetryOperation> r;
    for (const auto& e : elements_)
      if (e.parity() > 0) r.push_back(e);
    return r;
  }

  bool contains(const SymmetryOperation& op) const {
    return std::any_of(elements_.begin(), elements_.end(), [&](const auto& e) { return e.approx_equal(op); });
  }

 private:
  std::vector<SymmetryOperation> elements_;
};

// ---------------------------------------------------------------------------
// trial families

namespace quantity {
inline constexpr unsigned value = 1u;
inline constexpr unsigned gradient = 2u;
inline constexpr unsigned laplacian = 4u;
inline constexpr unsigned theta_gradient = 8u;
inline constexpr unsigned theta_laplacian = 16u;
inline constexpr unsigned all = 31u;
}  // namespace quantity

//! Values a family can return in one call. Fields not requested are left empty or zero.
struct TrialEvaluation {
  double value = 0.0;
  Configuration gradient;
  double laplacian = 0.0;
  Parameters theta_gradient;
  Parameters theta_laplacian;  //!< Δ(∂θk ψ)
};

class TrialFamily {
 public:
  virtual ~TrialFamily() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const = 0;

  virtual double value(const Parameters& theta, const Configuration& x) const {
    return evaluate(theta, x, quantity::value).value;
  }
};

//! Family assembled from a callable; handy for tests and user-supplied trials.
class FunctionTrialFamily final : public TrialFamily {
 public:
  using Evaluator = std::function<TrialEvaluation(const Parameters&, const Configuration&, unsigned)>;

  FunctionTrialFamily(std::string name, std::size_t d, std::size_t p, Evaluator f)
      : name_(std::move(name)), d_(d), p_(p), f_(std::move(f)) {}

  std::string name() const override { return name_; }
  std::size_t dimension() const override { return d_; }
  std::size_t parameter_count() const override { return p_; }
  TrialEvaluation evaluate(const Parameters& theta, const Configuration& x, unsigned what) const override {
    return f_(theta, x, what);
  }

 private:
  std::string name_;
  std::size_t d_, p_;
  Evaluator f_;
};

// ---------------------------------------------------------------------------
// model

struct Box {
  Configuration lower;
  Configuration upper;

  std::size_t dimension() const { return lower.size(); }
  double width(std::size_t i) const { return upper[i] - lower[i]; }
  double diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < lower.size(); ++i) s += width(i) * width(i);
    return std::sqrt(s);
  }
  bool contains(const Configuration& x) const {
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (x[i] < lower[i] || x[i] > upper[i]) return false;
    return true;
  }

  static Box cube(std::size_t d, double lo, double hi) { return {Configuration(d, lo), Configuration(d, hi)}; }
};

//! i-th point of the Halton sequence scaled to the box.
inline Configuration halton_point(std::size_t index, const Box& box) {
  static constexpr std::array<unsigned, kMaxDimension> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  Configuration x(box.dimension());
  for (std::size_t k = 0; k < box.dimension(); ++k) {
    double f = 1.0, r = 0.0;
    for (std::size_t i = index + 1; i > 0; i /= primes[k]) {
      f /= primes[k];
      r += f * static_cast<double>(i % primes[k]);
    }
    x[k] = box.lower[k] + r * box.width(k);
  }
  return x;
}

using PotentialFunction = std::function<double(const Configuration&)>;

class Model {
 public:
  Model(std::string name, std::size_t d, PotentialFunction potential, Box box,
        std::optional<SymmetryGroup> group = std::nullopt, double potential_lower_bound = -std::numeric_limits<double>::infinity())
      : name_(std::move(name)), d_(d), potential_(std::move(potential)), box_(std::move(box)), group_(std::move(group)),
        potential_lower_bound_(potential_lower_bound) {
    if (d_ == 0 || d_ > kMaxDimension) throw UsageError("model dimension out of range");
    if (box_.dimension() != d_) throw UsageError("box dimension does not match model dimension");
    for (std::size_t i = 0; i < d_; ++i)
      if (!(box_.upper[i] > box_.lower[i])) throw UsageError("box has empty extent on axis " + std::to_string(i));
    if (group_) {
      if (group_->dimension() != d_) throw UsageError("symmetry group dimension does not match model");
      for (std::size_t n = 0; n < 1000; ++n) {
        const Configuration x = halton_point(n, box_);
        const double v = potential_(x);
        for (const auto& s : group_->elements())
          if (std::abs(potential_(s.apply(x)) - v) > 1e-10 * std::max(1.0, std::abs(v)))
            throw UsageError("potential of model '" + name_ + "' is not invariant under its symmetry group");
      }
    }
  }

  const std::string& name() const { return name_; }
  std::size_t dimension() const { return d_; }
  double potential(const Configuration& x) const { return potential_(x); }
  const PotentialFunction& potential_function() const { return potential_; }
  const Box& box() const { return box_; }
  const std::optional<SymmetryGroup>& group() const { return group_; }
  double potential_lower_bound() const { return potential_lower_bound_; }

  std::optional<double> exact_energy;

 private:
  std::string name_;
  std::size_t d_;
  PotentialFunction potential_;
  Box box_;
  std::optional<SymmetryGroup> group_;
  double potential_lower_bound_;
};

// ---------------------------------------------------------------------------
// operations

//! max over points and elements of |ψ(Sx) − det(S)ψ(x)| / (1 + |ψ(x)|)
inline double verify_skew_symmetry(const TrialFamily& family, const Parameters& theta, const SymmetryGroup& group,
                                   std::span<const Configuration> points) {
  if (points.empty()) throw UsageError("verify_skew_symmetry needs at least one point");
  double worst = 0.0;
  for (const auto& x : points) {
    const double v = family.value(theta, x);
    for (const auto& s : group.elements()) {
      const double r = std::abs(family.value(theta, s.apply(x)) - s.parity() * v) / (1.0 + std::abs(v));
      worst = std::max(worst, r);
    }
  }
  return worst;
}

//! Runs the skew-symmetry check on 256 Halton points of the model box.
inline void validate_family(const Model& model, const TrialFamily& family, const Parameters& theta, double tolerance = 1e-10) {
  if (family.dimension() != model.dimension()) throw UsageError("trial family dimension does not match model");
  if (theta.size() != family.parameter_count())
    throw UsageError("family '" + family.name() + "' expects " + std::to_string(family.parameter_count()) + " parameters, got " +
                     std::to_string(theta.size()));
  if (!model.group()) return;
  std::vector<Configuration> pts;
  pts.reserve(256);
  for (std::size_t i = 0; i < 256; ++i) pts.push_back(halton_point(i, model.box()));
  const double r = verify_skew_symmetry(family, theta, *model.group(), pts);
  if (r > tolerance)
    throw UsageError("family '" + family.name() + "' is not skew-symmetric (residual " + std::to_string(r) + ")");
}

inline double node_threshold(double grad_norm, double box_diagonal) { return 1e-12 * (1.0 + grad_norm * box_diagonal); }

//! E_L = V − Δψ/(2ψ)
inline double local_energy(const Model& model, const TrialFamily& family, const Parameters& theta, const Configuration& x) {
  const auto t = family.evaluate(theta, x, quantity::value | quantity::gradient | quantity::laplacian);
  if (std::abs(t.value) < node_threshold(norm(t.gradient), model.box().diagonal()))
    throw NodeProximityError("local energy requested on the nodal surface");
  return model.potential(x) - t.laplacian / (2.0 * t.value);
}

//! r = ∇θψ / |∇ψ| at a node point.
inline Parameters nodal_shape_velocity(const TrialFamily& family, const Parameters& theta, const Configuration& x,
                                       double node_tolerance = 1e-6) {
  const auto t = family.evaluate(theta, x, quantity::value | quantity::gradient | quantity::theta_gradient);
  const double g = norm(t.gradient);
  if (std::abs(t.value) > node_tolerance * (1.0 + g)) throw UsageError("nodal_shape_velocity called off the node");
  if (!(g > 1e-14)) throw DegenerateNodeError("spatial gradient vanishes at the node point");
  Parameters r = t.theta_gradient;
  for (auto& v : r) v /= g;
  return r;
}

struct NamedFunction {
  std::string name;
  std::function<double(const Configuration&)> f;
  double operator()(const Configuration& x) const { return f(x); }
};

}  // namespace nodalmc
