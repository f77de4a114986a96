#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stresslab/market_data.hpp"
#include "stresslab/types.hpp"

namespace stresslab {

struct SeriesStats {
    double mean = 0.0;
    double std = 0.0;       // sample, n - 1 denominator
    double skewness = 0.0;  // adjusted Fisher-Pearson G1
};

struct DescriptiveStats {
    std::vector<std::string> tickers;
    std::vector<SeriesStats> columns;
};

SeriesStats series_stats(std::span<const double> x);
DescriptiveStats descriptive_stats(const ReturnMatrix& r);

struct SectorCorrelation {
    std::vector<std::string> labels;
    Matrix corr;
};

/// Pearson correlation of equal-weight sector-average daily returns.
SectorCorrelation sector_correlation(const ReturnMatrix& r);

/// Asymptotic constant-only Dickey-Fuller critical values (MacKinnon).
inline constexpr double kAdfCritical1 = -3.43;
inline constexpr double kAdfCritical5 = -2.86;
inline constexpr double kAdfCritical10 = -2.57;

struct AdfResult {
    double statistic = 0.0;
    std::size_t lag = 0;
    std::size_t nobs = 0;
    bool reject_1 = false;
    bool reject_5 = false;
    bool reject_10 = false;
    // p-value bracketed by the tabulated levels, e.g. [0.01, 0.05).
    double p_lower = 0.0;
    double p_upper = 1.0;
};

/// Constant-only ADF regression with the lag order picked by AIC over
/// 0..max_lag on a common sample, then re-estimated on all usable rows.
AdfResult adf_test(std::span<const double> x, std::size_t max_lag);

/// Schwert rule 12 * (n / 100)^(1/4).
std::size_t default_adf_max_lag(std::size_t n);

struct GarchFit {
    GarchParams params;
    double persistence = 0.0;
    double log_likelihood = 0.0;
    double initial_log_likelihood = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Gaussian log-likelihood of demeaned residuals under GARCH(1,1), with the
/// recursion seeded at `initial_variance`. Returns -inf if any conditional
/// variance is non-positive or non-finite.
double garch_log_likelihood(const GarchParams& p, std::span<const double> residuals, double initial_variance);

/// Conditional variances sigma2_0..sigma2_{n-1} for the same recursion.
std::vector<double> garch_conditional_variances(const GarchParams& p, std::span<const double> residuals,
                                                double initial_variance);

/// Maximum-likelihood GARCH(1,1) fit on a demeaned return series.
GarchFit garch_fit(std::span<const double> x, std::size_t max_iterations = 20000);

/// Simulates T draws eps_t = sigma_t * z_t starting from the unconditional
/// variance. Deterministic in `seed`.
std::vector<double> garch_simulate(const GarchParams& params, std::size_t length, std::uint64_t seed);

}  // namespace stresslab
