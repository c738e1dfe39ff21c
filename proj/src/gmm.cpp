#include "groundlm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace glm {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// log(w_k) + log N(x | mu_k, diag(var_k)) for every component.
void component_logs(const GmmModel& m, const std::vector<double>& x,
                    std::vector<double>& out) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  out.resize(m.kappa);
  for (std::size_t k = 0; k < m.kappa; ++k) {
    double s = 0;
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double d = x[j] - m.means[k][j];
      s += log2pi + std::log(m.variances[k][j]) + d * d / m.variances[k][j];
    }
    out[k] = (m.weights[k] > 0 ? std::log(m.weights[k])
                               : -std::numeric_limits<double>::infinity()) -
             0.5 * s;
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::vector<std::size_t> kmeanspp(const std::vector<std::vector<double>>& pts,
                                  std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> centers;
  std::vector<char> taken(n, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.push_back(pick(rng));
  taken[centers.back()] = 1;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], pts[centers.back()]));
      if (!taken[i]) total += d2[i];
    }
    std::size_t chosen = n;
    if (total > 0) {
      double target = unit(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || d2[i] <= 0) continue;
        chosen = i;
        target -= d2[i];
        if (target <= 0) break;
      }
    }
    if (chosen == n) {
      // Remaining points coincide with chosen centers.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) free.push_back(i);
      chosen = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    centers.push_back(chosen);
    taken[chosen] = 1;
  }
  return centers;
}

}  // namespace

std::vector<double> GmmModel::responsibilities(const std::vector<double>& point) const {
  if (point.size() != dim) {
    throw std::invalid_argument("gmm: point has dimension " + std::to_string(point.size()) +
                                ", model expects " + std::to_string(dim));
  }
  std::vector<double> logs;
  component_logs(*this, point, logs);
  const double z = log_sum_exp(logs);
  for (double& v : logs) v = std::exp(v - z);
  return logs;
}

GmmModel fit_gmm(const std::vector<std::vector<double>>& points, std::size_t kappa,
                 std::uint64_t seed, const GmmOptions& options) {
  if (points.empty()) throw std::invalid_argument("fit_gmm: no points");
  if (kappa == 0) throw std::invalid_argument("fit_gmm: kappa must be >= 1");
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  if (dim == 0) throw std::invalid_argument("fit_gmm: points have dimension 0");
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i].size() != dim) {
      throw std::invalid_argument("fit_gmm: point " + std::to_string(i) + " has dimension " +
                                  std::to_string(points[i].size()) + ", expected " +
                                  std::to_string(dim));
    }
  }
  const double floor = options.variance_floor;

  GmmModel m;
  m.kappa = std::min(kappa, n);
  m.dim = dim;

  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& p : points)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += p[j];
  for (double& v : mean) v /= double(n);
  for (const auto& p : points)
    for (std::size_t j = 0; j < dim; ++j) var[j] += (p[j] - mean[j]) * (p[j] - mean[j]);
  for (double& v : var) v = std::max(v / double(n), floor);

  std::mt19937_64 rng(seed);
  for (std::size_t c : kmeanspp(points, m.kappa, rng)) m.means.push_back(points[c]);
  m.variances.assign(m.kappa, var);
  m.weights.assign(m.kappa, 1.0 / double(m.kappa));

  std::vector<std::vector<double>> resp(n, std::vector<double>(m.kappa));
  std::vector<double> logs;
  auto e_step = [&]() {
    double ll = 0;
    for (std::size_t i = 0; i < n; ++i) {
      component_logs(m, points[i], logs);
      const double z = log_sum_exp(logs);
      ll += z;
      for (std::size_t k = 0; k < m.kappa; ++k) resp[i][k] = std::exp(logs[k] - z);
    }
    return ll;
  };

  double ll = e_step();
  m.loglik_trace.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    for (std::size_t k = 0; k < m.kappa; ++k) {
      double nk = 0;
      for (std::size_t i = 0; i < n; ++i) nk += resp[i][k];
      m.weights[k] = nk / double(n);
      if (nk <= 0) continue;  // empty component keeps its parameters
      std::vector<double>& mu = m.means[k];
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += resp[i][k] * points[i][j];
      for (double& v : mu) v /= nk;
      std::vector<double>& s2 = m.variances[k];
      std::fill(s2.begin(), s2.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
          const double d = points[i][j] - mu[j];
          s2[j] += resp[i][k] * d * d;
        }
      for (double& v : s2) v = std::max(v / nk, floor);
    }
    double wsum = 0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w /= wsum;

    const double prev = ll;
    ll = e_step();
    m.loglik_trace.push_back(ll);
    const double gain = ll - prev;
    const double rel = std::abs(prev) > 0 ? gain / std::abs(prev) : std::abs(gain);
    if (rel < options.tolerance) break;
  }
  m.loglik = ll;
  if (!std::isfinite(m.loglik)) throw std::runtime_error("fit_gmm: log-likelihood diverged");
  return m;
}

}  // namespace glm
