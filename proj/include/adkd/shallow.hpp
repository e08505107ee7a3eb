#pragma once

#include <vector>

#include "adkd/tensor.hpp"

namespace adkd {

enum class CovarianceMode { Full, Diag };

// Mean and regularized covariance of normal-data features, with a cached
// Cholesky factorization for full-mode scoring.
struct GaussianStats {
    CovarianceMode mode = CovarianceMode::Full;
    std::vector<double> mean;              // D
    std::vector<double> cov;               // D*D (full) or D (diag), before eps
    std::vector<double> chol;              // lower factor of cov + eps*I (full mode)
    double trace = 0.0;
    double eps = 0.0;

    int dim() const { return static_cast<int>(mean.size()); }
};

// Population (divide-by-N) covariance; eps = 1e-6 * max(trace/D, 1) is added
// to the diagonal before factorization.
GaussianStats fit_gaussian_stats(const Tensor& features, CovarianceMode mode);

// ||z - mean||^2 / D.
double mse_center_score(const GaussianStats& stats, std::span<const float> z);

// Squared Mahalanobis distance (z-mean)' (Sigma+eps I)^-1 (z-mean).
double mahalanobis_score(const GaussianStats& stats, std::span<const float> z,
                         CovarianceMode mode);

}  // namespace adkd
