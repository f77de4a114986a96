#include "stresslab/risk_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stresslab/error.hpp"

namespace stresslab {

PortfolioSpec::PortfolioSpec(Vector weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) throw ConfigError("portfolio needs at least one weight");
    if (!weights_.allFinite()) throw ConfigError("portfolio weights must be finite");
    if (std::abs(weights_.sum() - 1.0) > 1e-12) throw ConfigError("portfolio weights must sum to 1");
}

PortfolioSpec PortfolioSpec::equal_weight(std::size_t assets) {
    return PortfolioSpec(Vector::Constant(static_cast<Eigen::Index>(assets), 1.0 / static_cast<double>(assets)));
}

std::vector<double> portfolio_returns(const Matrix& returns, const PortfolioSpec& portfolio) {
    if (static_cast<std::size_t>(returns.cols()) != portfolio.size()) {
        throw DimensionError("portfolio has " + std::to_string(portfolio.size()) + " weights for " +
                             std::to_string(returns.cols()) + " assets");
    }
    const Vector r = returns * portfolio.weights();
    return {r.data(), r.data() + r.size()};
}

std::size_t tail_count(std::size_t n, double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
    // Guard against (1 - c) * n landing a hair above an integer.
    const double raw = (1.0 - confidence) * static_cast<double>(n);
    const double k = std::ceil(raw - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

namespace {

std::vector<double> smallest(std::span<const double> r, std::size_t k) {
    std::vector<double> sorted(r.begin(), r.end());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    sorted.resize(k);
    return sorted;
}

void require_length(std::span<const double> r) {
    if (r.size() < kMinTailObservations) {
        throw DataError("VaR/ES need at least " + std::to_string(kMinTailObservations) + " observations");
    }
}

}  // namespace

double value_at_risk(std::span<const double> r, double confidence) {
    require_length(r);
    const auto k = tail_count(r.size(), confidence);
    return -smallest(r, k).back();
}

double expected_shortfall(std::span<const double> r, double confidence) {
    require_length(r);
    const auto k = tail_count(r.size(), confidence);
    const auto tail = smallest(r, k);
    return -std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(k);
}

double max_drawdown(std::span<const double> r) {
    double wealth = 1.0;
    double peak = 1.0;
    double mdd = 0.0;
    for (double x : r) {
        if (!(x > -1.0)) throw DataError("max_drawdown: return <= -1 wipes out wealth");
        wealth *= 1.0 + x;
        peak = std::max(peak, wealth);
        mdd = std::max(mdd, (peak - wealth) / peak);
    }
    return mdd;
}

RiskReport risk_report(std::span<const double> r, double confidence) {
    return {value_at_risk(r, confidence), expected_shortfall(r, confidence), max_drawdown(r)};
}

DeltaReport delta_metrics(const RiskReport& base, const RiskReport& stressed) {
    return {stressed.var_95 - base.var_95, stressed.es_95 - base.es_95, stressed.max_drawdown - base.max_drawdown};
}

SectorShift sector_shifts(const Matrix& base, const Matrix& stressed, const SectorIndex& sectors) {
    if (base.rows() != stressed.rows() || base.cols() != stressed.cols()) {
        throw DimensionError("sector_shifts: base and stressed shapes differ");
    }
    const Matrix diff = stressed - base;
    SectorShift out;
    out.labels = sectors.labels;
    for (const auto& members : sectors.members) {
        double sum = 0.0;
        for (auto c : members) {
            if (static_cast<Eigen::Index>(c) >= diff.cols()) throw DimensionError("sector member outside matrix");
            sum += diff.col(static_cast<Eigen::Index>(c)).sum();
        }
        out.shifts.push_back(sum / static_cast<double>(members.size() * static_cast<std::size_t>(diff.rows())));
    }
    return out;
}

}  // namespace stresslab
