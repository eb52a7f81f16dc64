#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "nodalmc/core.hpp"

namespace nodalmc {

struct EstimateWithError {
  std::vector<double> value;
  std::vector<double> std_error;
  std::vector<double> covariance;  //!< row-major, empty when not computed
  double n_effective = 0.0;
  std::string method;
  std::map<std::string, std::string> metadata;
  std::vector<std::string> warnings;

  std::size_t size() const { return value.size(); }
  double scalar() const { return value.at(0); }
  double scalar_error() const { return std_error.at(0); }
  double z(std::size_t i, double reference = 0.0) const {
    const double e = std_error.at(i);
    const double d = value.at(i) - reference;
    if (e > 0) return d / e;
    return d == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
  }

  static EstimateWithError scalar_estimate(double v, double err, double n_eff, std::string method) {
    EstimateWithError e;
    e.value = {v};
    e.std_error = {err};
    e.covariance = {err * err};
    e.n_effective = n_eff;
    e.method = std::move(method);
    return e;
  }
};

inline std::string format_vector(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

namespace stats {

struct BlockingResult {
  double std_error = 0.0;
  bool plateau = true;
  std::size_t level = 0;
  std::size_t levels = 0;
};

//! Standard error of the mean of a correlated series by recursive pairwise blocking. The
//! plateau level is chosen with the automated chi-square criterion of Jonsson (2018).
inline BlockingResult blocking_error(std::span<const double> series) {
  if (series.size() < 16) throw UsageError("blocking needs at least 16 samples");
  std::vector<double> x(series.begin(), series.end());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());

  std::vector<double> var, gamma;
  std::vector<std::size_t> len;
  while (x.size() >= 2) {
    const std::size_t n = x.size();
    double s = 0.0, g = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] - mu) * (x[i] - mu);
    for (std::size_t i = 0; i + 1 < n; ++i) g += (x[i] - mu) * (x[i + 1] - mu);
    var.push_back(s / static_cast<double>(n));
    gamma.push_back(g / static_cast<double>(n));
    len.push_back(n);
    std::vector<double> y(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) y[i] = 0.5 * (x[2 * i] + x[2 * i + 1]);
    x.swap(y);
  }
  BlockingResult r;
  r.levels = var.size();
  if (var.front() == 0.0) return r;

  std::vector<double> m(var.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = var.size(); k-- > 0;) {
    if (var[k] > 0) acc += static_cast<double>(len[k]) * (gamma[k] / var[k]) * (gamma[k] / var[k]);
    m[k] = acc;
  }
  std::size_t k = 0;
  for (; k < var.size(); ++k) {
    const boost::math::chi_squared chi(static_cast<double>(k + 1));
    if (m[k] < boost::math::quantile(chi, 0.99)) break;
  }
  if (k + 1 >= var.size() || len[std::min(k, var.size() - 1)] < 4) {
    r.plateau = false;
    double worst = 0.0;
    for (std::size_t j = 0; j < var.size(); ++j)
      if (len[j] >= 2) worst = std::max(worst, std::sqrt(var[j] / static_cast<double>(len[j] - 1)));
    r.std_error = worst;
    r.level = var.size() - 1;
    return r;
  }
  r.level = k;
  r.std_error = std::sqrt(var[k] / static_cast<double>(len[k] - 1));
  return r;
}

inline double kish_effective_size(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0 ? s * s / s2 : 0.0;
}

struct JackknifeResult {
  std::vector<double> value;
  std::vector<double> covariance;
  std::vector<double> std_error;
};

//! Contiguous block assignment of n items into at most max_blocks blocks.
inline std::vector<std::size_t> block_boundaries(std::size_t n, std::size_t max_blocks) {
  const std::size_t b = std::max<std::size_t>(1, std::min(n, max_blocks));
  std::vector<std::size_t> edges(b + 1);
  for (std::size_t k = 0; k <= b; ++k) edges[k] = k * n / b;
  return edges;
}

//! Delete-one-block jackknife for estimators that are functions of component sums.
//! block_sums[b][c] holds the sum of component c over block b.
template <class F>
JackknifeResult jackknife_sums(const std::vector<std::vector<double>>& block_sums, F&& estimator) {
  const std::size_t nb = block_sums.size();
  if (nb == 0) throw UsageError("jackknife needs at least one block");
  const std::size_t nc = block_sums.front().size();
  std::vector<double> total(nc, 0.0);
  for (const auto& b : block_sums)
    for (std::size_t c = 0; c < nc; ++c) total[c] += b[c];
  JackknifeResult r;
  r.value = estimator(std::span<const double>(total));
  const std::size_t p = r.value.size();
  r.covariance.assign(p * p, 0.0);
  r.std_error.assign(p, 0.0);
  if (nb < 2) return r;
  std::vector<std::vector<double>> reps(nb);
  std::vector<double> mean(p, 0.0);
  std::vector<double> partial(nc);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) partial[c] = total[c] - block_sums[b][c];
    reps[b] = estimator(std::span<const double>(partial));
    for (std::size_t i = 0; i < p; ++i) mean[i] += reps[b][i] / static_cast<double>(nb);
  }
  const double f = static_cast<double>(nb - 1) / static_cast<double>(nb);
  for (const auto& rep : reps)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) r.covariance[i * p + j] += f * (rep[i] - mean[i]) * (rep[j] - mean[j]);
  for (std::size_t i = 0; i < p; ++i) r.std_error[i] = std::sqrt(r.covariance[i * p + i]);
  return r;
}

//! Accumulates per-item component vectors into contiguous blocks.
template <class F>
std::vector<std::vector<double>> block_sums(std::size_t n_items, std::size_t n_components, std::size_t max_blocks, F&& item) {
  const auto edges = block_boundaries(n_items, max_blocks);
  std::vector<std::vector<double>> sums(edges.size() - 1, std::vector<double>(n_components, 0.0));
  std::vector<double> buf(n_components);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    for (std::size_t i = edges[b]; i < edges[b + 1]; ++i) {
      std::fill(buf.begin(), buf.end(), 0.0);
      item(i, std::span<double>(buf));
      for (std::size_t c = 0; c < n_components; ++c) sums[b][c] += buf[c];
    }
  return sums;
}

inline EstimateWithError to_estimate(const JackknifeResult& j, double n_eff, std::string method) {
  EstimateWithError e;
  e.value = j.value;
  e.std_error = j.std_error;
  e.covariance = j.covariance;
  e.n_effective = n_eff;
  e.method = std::move(method);
  return e;
}

}  // namespace stats
}  // namespace nodalmc
