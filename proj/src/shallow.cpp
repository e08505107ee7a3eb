#include "adkd/shallow.hpp"

#include <cmath>

namespace adkd {

namespace {

// Lower-triangular Cholesky of a symmetric positive definite matrix.
std::vector<double> cholesky(const std::vector<double>& a, int d) {
    std::vector<double> L(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<std::size_t>(i) * d + j];
            for (int k = 0; k < j; ++k)
                s -= L[static_cast<std::size_t>(i) * d + k] *
                     L[static_cast<std::size_t>(j) * d + k];
            if (i == j) {
                if (s <= 0.0) {
                    throw NumericError(
                        "covariance is degenerate beyond the eps repair (Cholesky failed)");
                }
                L[static_cast<std::size_t>(i) * d + j] = std::sqrt(s);
            } else {
                L[static_cast<std::size_t>(i) * d + j] =
                    s / L[static_cast<std::size_t>(j) * d + j];
            }
        }
    }
    return L;
}

}  // namespace

GaussianStats fit_gaussian_stats(const Tensor& features, CovarianceMode mode) {
    if (features.ndim() != 2) {
        throw DimensionError("fit_gaussian_stats expects [N,D] features, got " +
                             shape_str(features.shape()));
    }
    const int n = features.dim(0), d = features.dim(1);
    if (n < 1) throw ArgumentError("fit_gaussian_stats needs at least one sample");
    auto fv = features.data();
    for (float v : fv) {
        if (!std::isfinite(v)) throw NumericError("non-finite feature value");
    }

    GaussianStats st;
    st.mode = mode;
    st.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) st.mean[static_cast<std::size_t>(j)] += fv[i * d + j];
    for (auto& m : st.mean) m /= n;

    if (mode == CovarianceMode::Full) {
        st.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < d; ++a) {
                const double da = fv[i * d + a] - st.mean[static_cast<std::size_t>(a)];
                for (int b = 0; b <= a; ++b) {
                    const double db = fv[i * d + b] - st.mean[static_cast<std::size_t>(b)];
                    st.cov[static_cast<std::size_t>(a) * d + b] += da * db;
                }
            }
        }
        for (int a = 0; a < d; ++a)
            for (int b = 0; b <= a; ++b) {
                st.cov[static_cast<std::size_t>(a) * d + b] /= n;
                st.cov[static_cast<std::size_t>(b) * d + a] =
                    st.cov[static_cast<std::size_t>(a) * d + b];
            }
        for (int a = 0; a < d; ++a) st.trace += st.cov[static_cast<std::size_t>(a) * d + a];
    } else {
        st.cov.assign(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                const double dv = fv[i * d + j] - st.mean[static_cast<std::size_t>(j)];
                st.cov[static_cast<std::size_t>(j)] += dv * dv;
            }
        for (auto& v : st.cov) {
            v /= n;
            st.trace += v;
        }
    }

    st.eps = 1e-6 * std::max(st.trace / d, 1.0);
    if (mode == CovarianceMode::Full) {
        std::vector<double> reg = st.cov;
        for (int a = 0; a < d; ++a) reg[static_cast<std::size_t>(a) * d + a] += st.eps;
        st.chol = cholesky(reg, d);
    }
    return st;
}

double mse_center_score(const GaussianStats& stats, std::span<const float> z) {
    const int d = stats.dim();
    if (static_cast<int>(z.size()) != d) {
        throw DimensionError("mse_center_score: feature dim " + std::to_string(z.size()) +
                             " does not match fitted dim " + std::to_string(d));
    }
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = static_cast<double>(z[static_cast<std::size_t>(j)]) -
                            stats.mean[static_cast<std::size_t>(j)];
        acc += diff * diff;
    }
    return acc / d;
}

double mahalanobis_score(const GaussianStats& stats, std::span<const float> z,
                         CovarianceMode mode) {
    const int d = stats.dim();
    if (static_cast<int>(z.size()) != d) {
        throw DimensionError("mahalanobis_score: feature dim mismatch");
    }
    if (mode != stats.mode) {
        throw ArgumentError("mahalanobis_score: requested mode does not match fitted stats");
    }
    std::vector<double> diff(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        diff[static_cast<std::size_t>(j)] =
            static_cast<double>(z[static_cast<std::size_t>(j)]) -
            stats.mean[static_cast<std::size_t>(j)];

    if (mode == CovarianceMode::Diag) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
            acc += diff[static_cast<std::size_t>(j)] * diff[static_cast<std::size_t>(j)] /
                   (stats.cov[static_cast<std::size_t>(j)] + stats.eps);
        return acc;
    }

    // Solve L y = diff; the squared distance is ||y||^2.
    std::vector<double> y(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        double s = diff[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k)
            s -= stats.chol[static_cast<std::size_t>(i) * d + k] * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / stats.chol[static_cast<std::size_t>(i) * d + i];
    }
    double acc = 0.0;
    for (double v : y) acc += v * v;
    return acc;
}

}  // namespace adkd
