#pragma once

#include <cstdint>
#include <vector>

namespace glm {

struct GmmOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;       // relative log-likelihood improvement
  double variance_floor = 1e-6;
};

// Diagonal-covariance Gaussian mixture.
struct GmmModel {
  std::size_t kappa = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> means;      // kappa x dim
  std::vector<std::vector<double>> variances;  // kappa x dim
  std::vector<double> weights;                 // sums to 1
  double loglik = 0;
  std::vector<double> loglik_trace;            // one entry per EM iteration

  // Per-point posterior responsibilities, kappa entries.
  std::vector<double> responsibilities(const std::vector<double>& point) const;
};

// Fits a mixture by EM from a k-means++ initialisation. kappa is capped at the
// number of points. Throws std::invalid_argument on empty input, kappa == 0 or
// ragged points.
GmmModel fit_gmm(const std::vector<std::vector<double>>& points, std::size_t kappa,
                 std::uint64_t seed, const GmmOptions& options = {});

}  // namespace glm
