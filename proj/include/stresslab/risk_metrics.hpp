#pragma once

#include <span>
#include <string>
#include <vector>

#include "stresslab/market_data.hpp"
#include "stresslab/types.hpp"

namespace stresslab {

/// Portfolio weights; must sum to one.
class PortfolioSpec {
public:
    explicit PortfolioSpec(Vector weights);

    static PortfolioSpec equal_weight(std::size_t assets);

    const Vector& weights() const { return weights_; }
    std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }

private:
    Vector weights_;
};

/// VaR and ES are reported as positive losses.
struct RiskReport {
    double var_95 = 0.0;
    double es_95 = 0.0;
    double max_drawdown = 0.0;
};

struct DeltaReport {
    double d_var = 0.0;
    double d_es = 0.0;
    double d_drawdown = 0.0;
};

/// Mean return change per sector, labels in SectorIndex order.
struct SectorShift {
    std::vector<std::string> labels;
    std::vector<double> shifts;
};

inline constexpr double kDefaultConfidence = 0.95;
inline constexpr std::size_t kMinTailObservations = 20;

std::vector<double> portfolio_returns(const Matrix& returns, const PortfolioSpec& portfolio);

/// Number of tail observations, ceil((1 - confidence) * n).
std::size_t tail_count(std::size_t n, double confidence);

/// -(k-th smallest return).
double value_at_risk(std::span<const double> r, double confidence = kDefaultConfidence);

/// -(mean of the k smallest returns).
double expected_shortfall(std::span<const double> r, double confidence = kDefaultConfidence);

/// Largest peak-to-trough decline of compounded wealth starting at 1.
double max_drawdown(std::span<const double> r);

RiskReport risk_report(std::span<const double> r, double confidence = kDefaultConfidence);

DeltaReport delta_metrics(const RiskReport& base, const RiskReport& stressed);

SectorShift sector_shifts(const Matrix& base, const Matrix& stressed, const SectorIndex& sectors);

}  // namespace stresslab
