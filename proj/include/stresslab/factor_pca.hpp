#pragma once

#include <filesystem>

#include "stresslab/market_data.hpp"
#include "stresslab/types.hpp"

namespace stresslab {

/// Principal components of one window of raw returns.
///
/// Loadings are the top-d eigenvectors of the sample covariance, ordered by
/// decreasing variance. Each column is signed so that its largest-magnitude
/// entry is positive, which pins perturbation directions across windows.
struct PcaModel {
    Vector means;               // length N
    Matrix loadings;            // N x d, orthonormal columns
    Vector explained_variance;  // length d, non-increasing, >= 0
    double total_variance = 0.0;

    Eigen::Index components() const { return loadings.cols(); }
    Vector explained_variance_ratio() const;
};

/// Requires 1 <= d <= min(w - 1, N). Rank-deficient windows yield trailing
/// zero variances with orthonormally completed loadings.
PcaModel fit_pca(const WindowView& window, Eigen::Index d);
PcaModel fit_pca(const Matrix& x, Eigen::Index d);

/// scores = (X - means) * L
Matrix transform(const PcaModel& model, const Matrix& x);

/// X = scores * L^T + means
Matrix inverse_transform(const PcaModel& model, const Matrix& scores);

/// Writes `component,variance,ratio,<tickers...>` rows, one per component.
void write_pca_model(const PcaModel& model, const std::vector<std::string>& tickers,
                     const std::filesystem::path& path);

}  // namespace stresslab
