#include "stresslab/factor_pca.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "stresslab/csv.hpp"
#include "stresslab/error.hpp"

namespace stresslab {

namespace {

Eigen::Index max_abs_index(const Vector& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    }
    return best;
}

}  // namespace

Vector PcaModel::explained_variance_ratio() const {
    if (!(total_variance > 0.0)) return Vector::Zero(explained_variance.size());
    return explained_variance / total_variance;
}

PcaModel fit_pca(const Matrix& x, Eigen::Index d) {
    const Eigen::Index w = x.rows();
    const Eigen::Index n = x.cols();
    if (d < 1 || d > std::min(w - 1, n)) {
        throw DimensionError("PCA component count " + std::to_string(d) + " outside [1, min(w-1, N)] = [1, " +
                             std::to_string(std::min(w - 1, n)) + "]");
    }

    PcaModel model;
    model.means = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - model.means.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(w - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");

    Vector values = eig.eigenvalues().cwiseMax(0.0);
    Matrix vectors = eig.eigenvectors();
    std::vector<Eigen::Index> pivot(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index k = max_abs_index(vectors.col(j));
        if (vectors(k, j) < 0.0) vectors.col(j) *= -1.0;
        pivot[static_cast<std::size_t>(j)] = k;
    }

    const double scale = std::max(values.maxCoeff(), 1e-300);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (std::abs(values(a) - values(b)) > 1e-12 * scale) return values(a) > values(b);
        return pivot[static_cast<std::size_t>(a)] < pivot[static_cast<std::size_t>(b)];
    });

    model.loadings.resize(n, d);
    model.explained_variance.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto src = order[static_cast<std::size_t>(j)];
        model.loadings.col(j) = vectors.col(src);
        model.explained_variance(j) = values(src);
    }
    // Keep the reported ordering monotone even inside numerically tied groups.
    for (Eigen::Index j = 1; j < d; ++j) {
        model.explained_variance(j) = std::min(model.explained_variance(j), model.explained_variance(j - 1));
    }
    model.total_variance = cov.trace();
    return model;
}

PcaModel fit_pca(const WindowView& window, Eigen::Index d) { return fit_pca(window.data, d); }

Matrix transform(const PcaModel& model, const Matrix& x) {
    if (x.cols() != model.means.size()) throw DimensionError("PCA transform: column count mismatch");
    return (x.rowwise() - model.means.transpose()) * model.loadings;
}

Matrix inverse_transform(const PcaModel& model, const Matrix& scores) {
    if (scores.cols() != model.loadings.cols()) throw DimensionError("PCA inverse_transform: score width mismatch");
    Matrix out = scores * model.loadings.transpose();
    out.rowwise() += model.means.transpose();
    return out;
}

void write_pca_model(const PcaModel& model, const std::vector<std::string>& tickers,
                     const std::filesystem::path& path) {
    csv::Writer w(path);
    w.field("component").field("variance").field("ratio");
    for (const auto& t : tickers) w.field(t);
    w.end_row();
    const Vector ratio = model.explained_variance_ratio();
    for (Eigen::Index j = 0; j < model.components(); ++j) {
        w.field("PC" + std::to_string(j + 1)).field(model.explained_variance(j)).field(ratio(j));
        for (Eigen::Index i = 0; i < model.loadings.rows(); ++i) w.field(model.loadings(i, j));
        w.end_row();
    }
}

}  // namespace stresslab
