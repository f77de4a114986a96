#include "stresslab/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "stresslab/error.hpp"

namespace stresslab {

SeriesStats series_stats(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 3) throw DataError("descriptive statistics need at least 3 observations");
    const double nd = static_cast<double>(n);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / nd;
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    if (!(m2 > 0.0)) throw NumericalError("degenerate series: zero variance");
    SeriesStats s;
    s.mean = mean;
    s.std = std::sqrt(m2 / (nd - 1.0));
    m2 /= nd;
    m3 /= nd;
    const double g1 = m3 / std::pow(m2, 1.5);
    s.skewness = std::sqrt(nd * (nd - 1.0)) / (nd - 2.0) * g1;
    return s;
}

DescriptiveStats descriptive_stats(const ReturnMatrix& r) {
    DescriptiveStats out;
    out.tickers = r.tickers;
    for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
        const Vector col = r.values.col(j);
        try {
            out.columns.push_back(series_stats({col.data(), static_cast<std::size_t>(col.size())}));
        } catch (const NumericalError&) {
            throw NumericalError("degenerate column '" + r.tickers[static_cast<std::size_t>(j)] + "': zero variance");
        }
    }
    return out;
}

SectorCorrelation sector_correlation(const ReturnMatrix& r) {
    const auto idx = index_sectors(r.tickers, r.sectors);
    const auto k = static_cast<Eigen::Index>(idx.labels.size());
    Matrix series(r.values.rows(), k);
    for (Eigen::Index s = 0; s < k; ++s) {
        const auto& members = idx.members[static_cast<std::size_t>(s)];
        Vector acc = Vector::Zero(r.values.rows());
        for (auto c : members) acc += r.values.col(static_cast<Eigen::Index>(c));
        series.col(s) = acc / static_cast<double>(members.size());
    }
    const Matrix centered = series.rowwise() - series.colwise().mean();
    const Vector norms = centered.colwise().norm().transpose();
    for (Eigen::Index s = 0; s < k; ++s) {
        if (!(norms(s) > 0.0)) {
            throw NumericalError("sector '" + idx.labels[static_cast<std::size_t>(s)] + "' has zero-variance returns");
        }
    }
    SectorCorrelation out;
    out.labels = idx.labels;
    out.corr = Matrix::Identity(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = a + 1; b < k; ++b) {
            const double rho = std::clamp(centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b)), -1.0, 1.0);
            out.corr(a, b) = rho;
            out.corr(b, a) = rho;
        }
    }
    return out;
}

namespace {

struct OlsFit {
    Vector coef;
    double rss = 0.0;
    double t_first = 0.0;  // t-ratio of the first regressor after the intercept
};

OlsFit ols(const Matrix& x, const Vector& y) {
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-12);
    if (qr.rank() < x.cols()) throw NumericalError("singular ADF regression");
    OlsFit f;
    f.coef = qr.solve(y);
    f.rss = (y - x * f.coef).squaredNorm();
    const double dof = static_cast<double>(x.rows() - x.cols());
    const double s2 = f.rss / dof;
    const Matrix xtx_inv = (x.transpose() * x).ldlt().solve(Matrix::Identity(x.cols(), x.cols()));
    const double se = std::sqrt(s2 * xtx_inv(1, 1));
    if (!(se > 0.0)) throw NumericalError("singular ADF regression");
    f.t_first = f.coef(1) / se;
    return f;
}

// Regressors [1, x_{t-1}, dx_{t-1} .. dx_{t-p}] for t in [first, n_diff).
void adf_design(std::span<const double> x, const std::vector<double>& dx, std::size_t p, std::size_t first,
                Matrix& design, Vector& target) {
    const std::size_t rows = dx.size() - first;
    design.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(2 + p));
    target.resize(static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t t = first + i;  // dx[t] = x[t+1] - x[t]
        const auto r = static_cast<Eigen::Index>(i);
        target(r) = dx[t];
        design(r, 0) = 1.0;
        design(r, 1) = x[t];
        for (std::size_t j = 1; j <= p; ++j) design(r, static_cast<Eigen::Index>(1 + j)) = dx[t - j];
    }
}

}  // namespace

std::size_t default_adf_max_lag(std::size_t n) {
    return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

AdfResult adf_test(std::span<const double> x, std::size_t max_lag) {
    if (x.size() < 25 + max_lag) {
        throw DataError("ADF needs at least " + std::to_string(25 + max_lag) + " observations");
    }
    std::vector<double> dx(x.size() - 1);
    for (std::size_t t = 0; t + 1 < x.size(); ++t) dx[t] = x[t + 1] - x[t];

    Matrix design;
    Vector target;
    std::size_t best_lag = 0;
    double best_aic = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p <= max_lag; ++p) {
        adf_design(x, dx, p, max_lag, design, target);
        const auto fit = ols(design, target);
        const double n = static_cast<double>(design.rows());
        const double aic = n * std::log(fit.rss / n) + 2.0 * static_cast<double>(design.cols());
        if (aic < best_aic) {
            best_aic = aic;
            best_lag = p;
        }
    }

    adf_design(x, dx, best_lag, best_lag, design, target);
    const auto fit = ols(design, target);

    AdfResult res;
    res.statistic = fit.t_first;
    res.lag = best_lag;
    res.nobs = static_cast<std::size_t>(design.rows());
    res.reject_1 = res.statistic < kAdfCritical1;
    res.reject_5 = res.statistic < kAdfCritical5;
    res.reject_10 = res.statistic < kAdfCritical10;
    if (res.reject_1) {
        res.p_lower = 0.0;
        res.p_upper = 0.01;
    } else if (res.reject_5) {
        res.p_lower = 0.01;
        res.p_upper = 0.05;
    } else if (res.reject_10) {
        res.p_lower = 0.05;
        res.p_upper = 0.10;
    } else {
        res.p_lower = 0.10;
        res.p_upper = 1.0;
    }
    return res;
}

std::vector<double> garch_conditional_variances(const GarchParams& p, std::span<const double> residuals,
                                                double initial_variance) {
    std::vector<double> s2(residuals.size());
    if (residuals.empty()) return s2;
    s2[0] = initial_variance;
    for (std::size_t t = 1; t < residuals.size(); ++t) {
        s2[t] = p.omega + p.alpha * residuals[t - 1] * residuals[t - 1] + p.beta * s2[t - 1];
    }
    return s2;
}

double garch_log_likelihood(const GarchParams& p, std::span<const double> residuals, double initial_variance) {
    constexpr double log_2pi = 1.8378770664093454835606594728112;
    double ll = 0.0;
    double s2 = initial_variance;
    for (std::size_t t = 0; t < residuals.size(); ++t) {
        if (t > 0) s2 = p.omega + p.alpha * residuals[t - 1] * residuals[t - 1] + p.beta * s2;
        if (!(s2 > 0.0) || !std::isfinite(s2)) return -std::numeric_limits<double>::infinity();
        ll -= 0.5 * (log_2pi + std::log(s2) + residuals[t] * residuals[t] / s2);
    }
    return ll;
}

namespace {

// Persistence is capped just below one so the unconditional variance exists.
constexpr double kMaxPersistence = 0.99999;

// Unconstrained (log omega, b, c) -> (omega, alpha, beta) with
// alpha + beta = P sin^2 b, alpha share = sin^2 c. Both alpha and beta reach 0.
GarchParams from_unconstrained(const std::array<double, 3>& u) {
    const double sb = std::sin(u[1]);
    const double sc = std::sin(u[2]);
    const double cc = std::cos(u[2]);
    const double persistence = kMaxPersistence * sb * sb;
    return {std::exp(u[0]), persistence * sc * sc, persistence * cc * cc};
}

std::array<double, 3> to_unconstrained(const GarchParams& p) {
    const double persistence = p.alpha + p.beta;
    const double share = persistence > 0.0 ? p.alpha / persistence : 0.5;
    return {std::log(p.omega), std::asin(std::sqrt(persistence / kMaxPersistence)), std::asin(std::sqrt(share))};
}

struct SimplexResult {
    std::array<double, 3> x;
    double f;
    std::size_t iterations;
    bool converged;
};

// Nelder-Mead with standard coefficients (reflection 1, expansion 2,
// contraction 0.5, shrink 0.5).
SimplexResult nelder_mead(const std::function<double(const std::array<double, 3>&)>& f, std::array<double, 3> start,
                          double step, std::size_t max_iter, double ftol, double xtol) {
    constexpr std::size_t n = 3;
    std::array<std::array<double, n>, n + 1> pts{};
    std::array<double, n + 1> vals{};
    pts[0] = start;
    for (std::size_t i = 0; i < n; ++i) {
        pts[i + 1] = start;
        pts[i + 1][i] += step;
    }
    for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    std::size_t iter = 0;
    bool converged = false;
    std::array<std::size_t, n + 1> order{};
    for (; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order[0];
        const std::size_t worst = order[n];
        const std::size_t second = order[n - 1];

        double fspread = std::abs(vals[worst] - vals[best]);
        double xspread = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) xspread = std::max(xspread, std::abs(pts[i][j] - pts[best][j]));
        }
        if (std::isfinite(vals[worst]) && fspread <= ftol * (std::abs(vals[best]) + 1e-12) && xspread <= xtol) {
            converged = true;
            break;
        }

        std::array<double, n> centroid{};
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
        }
        auto along = [&](double t) {
            std::array<double, n> p{};
            for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
            return p;
        };

        const auto xr = along(-1.0);
        const double fr = f(xr);
        if (fr < vals[best]) {
            const auto xe = along(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const auto xc = along(outside ? -0.5 : 0.5);
        const double fc = f(xc);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
            vals[i] = f(pts[i]);
        }
    }
    const auto best_it = std::min_element(vals.begin(), vals.end());
    const auto bi = static_cast<std::size_t>(best_it - vals.begin());
    return {pts[bi], vals[bi], iter, converged};
}

}  // namespace

GarchFit garch_fit(std::span<const double> x, std::size_t max_iterations) {
    if (x.size() < 250) throw DataError("GARCH fit needs at least 250 observations");
    const double nd = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / nd;
    std::vector<double> eps(x.size());
    double var = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        eps[t] = x[t] - mean;
        var += eps[t] * eps[t];
    }
    var /= nd;
    if (!(var > 0.0)) throw NumericalError("GARCH fit on a constant series");

    const GarchParams init{var * 0.05, 0.05, 0.90};
    auto objective = [&](const std::array<double, 3>& u) {
        const double ll = garch_log_likelihood(from_unconstrained(u), eps, var);
        return std::isfinite(ll) ? -ll / nd : std::numeric_limits<double>::infinity();
    };

    GarchFit fit;
    fit.initial_log_likelihood = garch_log_likelihood(init, eps, var);

    // Restart from the incumbent until a fresh simplex no longer improves it.
    auto u = to_unconstrained(init);
    double best = objective(u);
    std::size_t used = 0;
    bool converged = false;
    for (int restart = 0; restart < 8 && used < max_iterations; ++restart) {
        const auto res = nelder_mead(objective, u, restart == 0 ? 0.25 : 0.05, max_iterations - used, 1e-12, 1e-7);
        used += res.iterations;
        const double gain = best - res.f;
        if (res.f <= best) {
            u = res.x;
            best = res.f;
        }
        if (res.converged && gain < 1e-11 * (std::abs(best) + 1e-12) && restart > 0) {
            converged = true;
            break;
        }
    }

    fit.params = from_unconstrained(u);
    fit.persistence = fit.params.persistence();
    fit.log_likelihood = -best * nd;
    fit.converged = converged;
    fit.iterations = used;
    return fit;
}

std::vector<double> garch_simulate(const GarchParams& params, std::size_t length, std::uint64_t seed) {
    if (!(params.omega > 0.0) || !(params.alpha >= 0.0) || !(params.beta >= 0.0) ||
        !(params.alpha + params.beta < 1.0)) {
        throw ConfigError("invalid GARCH parameters: need omega > 0, alpha >= 0, beta >= 0, alpha + beta < 1");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(length);
    double s2 = params.unconditional_variance();
    double prev = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) s2 = params.omega + params.alpha * prev * prev + params.beta * s2;
        prev = std::sqrt(s2) * normal(rng);
        out[t] = prev;
    }
    return out;
}

}  // namespace stresslab
