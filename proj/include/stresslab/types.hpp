#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace stresslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Date = std::chrono::year_month_day;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws DataError.
Date parse_date(std::string_view text);
std::string format_date(Date date);

/// Inclusive calendar range.
struct DateRange {
    Date first;
    Date last;
};

/// GARCH(1,1) coefficients: sigma2_t = omega + alpha * eps2_{t-1} + beta * sigma2_{t-1}.
struct GarchParams {
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;

    double persistence() const { return alpha + beta; }
    double unconditional_variance() const { return omega / (1.0 - alpha - beta); }
};

}  // namespace stresslab
