#include "stresslab/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <variant>

#include "stresslab/csv.hpp"
#include "stresslab/error.hpp"
#include "stresslab/parallel.hpp"

namespace stresslab {

StressSpec StressSpec::single(std::size_t component, double magnitude, int sign) {
    StressSpec s;
    s.kind = Kind::Single;
    s.component = component;
    s.magnitude = magnitude;
    s.sign = sign;
    return s;
}

StressSpec StressSpec::multi(std::vector<double> multipliers, int sign) {
    StressSpec s;
    s.kind = Kind::Multi;
    s.multipliers = std::move(multipliers);
    s.sign = sign;
    return s;
}

StressSpec StressSpec::none(std::size_t components) { return multi(std::vector<double>(components, 0.0)); }

Vector StressSpec::shifts(const Vector& sigma) const {
    Vector out = Vector::Zero(sigma.size());
    if (kind == Kind::Single) {
        if (static_cast<Eigen::Index>(component) >= sigma.size()) throw ConfigError("stress component out of range");
        out(static_cast<Eigen::Index>(component)) = sign * magnitude * sigma(static_cast<Eigen::Index>(component));
    } else {
        if (static_cast<Eigen::Index>(multipliers.size()) != sigma.size()) {
            throw ConfigError("stress vector has " + std::to_string(multipliers.size()) + " entries for " +
                              std::to_string(sigma.size()) + " components");
        }
        for (Eigen::Index j = 0; j < sigma.size(); ++j) {
            out(j) = sign * multipliers[static_cast<std::size_t>(j)] * sigma(j);
        }
    }
    return out;
}

std::string StressSpec::describe() const {
    std::ostringstream os;
    const char* sgn = sign < 0 ? "-" : "+";
    if (kind == Kind::Single) {
        os << "single:" << component + 1 << ":" << sgn << csv::format_double(magnitude);
    } else {
        os << "multi:" << sgn << "[";
        for (std::size_t j = 0; j < multipliers.size(); ++j) {
            if (j) os << ";";
            os << csv::format_double(multipliers[j]);
        }
        os << "]";
    }
    return os.str();
}

void validate(const StressSpec& spec, Eigen::Index components) {
    if (spec.sign != 1 && spec.sign != -1) throw ConfigError("stress sign must be +1 or -1");
    if (spec.kind == StressSpec::Kind::Single) {
        if (static_cast<Eigen::Index>(spec.component) >= components) {
            throw ConfigError("stress component " + std::to_string(spec.component + 1) + " exceeds d = " +
                              std::to_string(components));
        }
        if (!std::isfinite(spec.magnitude)) throw ConfigError("stress magnitude must be finite");
    } else {
        if (static_cast<Eigen::Index>(spec.multipliers.size()) != components) {
            throw ConfigError("stress vector length " + std::to_string(spec.multipliers.size()) +
                              " does not match d = " + std::to_string(components));
        }
        for (double m : spec.multipliers) {
            if (!std::isfinite(m)) throw ConfigError("stress multipliers must be finite");
        }
    }
}

namespace {

Vector column_std(const Matrix& x) {
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const double denom = static_cast<double>(std::max<Eigen::Index>(x.rows() - 1, 1));
    return (centered.colwise().squaredNorm() / denom).cwiseSqrt().transpose();
}

}  // namespace

LatentStress apply_latent_stress(const Matrix& latents, const Decoder& decode, const StressSpec& spec,
                                 const PortfolioSpec& portfolio, const SectorIndex& sectors) {
    validate(spec, latents.cols());
    LatentStress out;
    out.latent_std = column_std(latents);
    const Vector shift = spec.shifts(out.latent_std);
    Matrix shifted = latents;
    shifted.rowwise() += shift.transpose();

    out.baseline_returns = decode(latents);
    out.stressed_returns = decode(shifted);
    const auto base_pr = portfolio_returns(out.baseline_returns, portfolio);
    const auto stress_pr = portfolio_returns(out.stressed_returns, portfolio);
    out.baseline = risk_report(base_pr);
    out.stressed = risk_report(stress_pr);
    out.delta = delta_metrics(out.baseline, out.stressed);
    out.sectors = sector_shifts(out.baseline_returns, out.stressed_returns, sectors);
    return out;
}

LatentStress stress_window_pca(const WindowView& window, Eigen::Index components, const StressSpec& spec,
                               const PortfolioSpec& portfolio, const SectorIndex& sectors) {
    const PcaModel model = fit_pca(window, components);
    const Matrix scores = transform(model, window.data);
    return apply_latent_stress(
        scores, [&](const Matrix& s) { return inverse_transform(model, s); }, spec, portfolio, sectors);
}

LatentStress stress_window_ae(const WindowView& window, const nn::TrainConfig& train, const StressSpec& spec,
                              const PortfolioSpec& portfolio, const SectorIndex& sectors, nn::AeModel* trained) {
    const Standardizer scale = fit_standardizer(window);
    const Matrix z = standardize(window.data, scale);
    nn::AeModel model = nn::train_ae(z, train);
    model.standardizer = scale;
    const Matrix latents = nn::encode(model, z);
    auto out = apply_latent_stress(
        latents, [&](const Matrix& l) { return destandardize(nn::decode(model, l), scale); }, spec, portfolio,
        sectors);
    if (trained) *trained = std::move(model);
    return out;
}

namespace {

WindowResult to_result(const ReturnMatrix& r, const WindowView& v, const LatentStress& s, const StressSpec& spec) {
    WindowResult res;
    res.window = v.index;
    res.start = v.start;
    res.length = v.length;
    res.first_date = r.dates[v.start];
    res.last_date = r.dates[v.start + v.length - 1];
    res.baseline = s.baseline;
    res.stressed = s.stressed;
    res.delta = s.delta;
    res.sectors = s.sectors;
    res.stress = spec;
    return res;
}

void check_portfolio(const ReturnMatrix& r, const PortfolioSpec& portfolio) {
    if (portfolio.size() != r.cols()) {
        throw ConfigError("portfolio has " + std::to_string(portfolio.size()) + " weights for " +
                          std::to_string(r.cols()) + " assets");
    }
}

void check_components(const ReturnMatrix& r, Eigen::Index d) {
    if (d < 1 || static_cast<std::size_t>(d) > r.cols()) {
        throw ConfigError("d = " + std::to_string(d) + " must satisfy 1 <= d <= N = " + std::to_string(r.cols()));
    }
}

}  // namespace

std::vector<WindowResult> run_pca_stress(const ReturnMatrix& r, const StressSpec& spec, const PortfolioSpec& portfolio,
                                         const PcaOptions& options) {
    check_portfolio(r, portfolio);
    check_components(r, options.components);
    validate(spec, options.components);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    const auto starts = window_starts(r.rows(), options.window, options.stride);
    return parallel_map(starts.size(), options.threads, [&](std::size_t i) {
        const auto view = make_window(r, i, starts[i], options.window);
        if (options.model_sink) options.model_sink(i, fit_pca(view, options.components));
        return to_result(r, view, stress_window_pca(view, options.components, spec, portfolio, sectors), spec);
    });
}

std::uint64_t window_seed(std::uint64_t master, std::size_t window) { return master + window; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined state
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PipelineRun<WindowResult> run_ae_stress(const ReturnMatrix& r, const StressSpec& spec, const PortfolioSpec& portfolio,
                                        const AeOptions& options) {
    check_portfolio(r, portfolio);
    check_components(r, options.train.latent);
    validate(spec, options.train.latent);
    nn::validate(options.train);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    const auto starts = window_starts(r.rows(), options.window, options.stride);

    using Outcome = std::variant<WindowResult, WindowFailure>;
    auto outcomes = parallel_map(starts.size(), options.threads, [&](std::size_t i) -> Outcome {
        const auto view = make_window(r, i, starts[i], options.window);
        nn::TrainConfig cfg = options.train;
        cfg.seed = window_seed(options.train.seed, i);
        try {
            nn::AeModel model;
            const auto s = stress_window_ae(view, cfg, spec, portfolio, sectors, &model);
            if (options.model_sink) options.model_sink(i, model);
            return to_result(r, view, s, spec);
        } catch (const TrainingDivergence& e) {
            return WindowFailure{i, r.dates[view.start], r.dates[view.start + view.length - 1], e.what()};
        }
    });

    PipelineRun<WindowResult> run;
    for (auto& o : outcomes) {
        if (auto* ok = std::get_if<WindowResult>(&o)) run.results.push_back(std::move(*ok));
        else run.failures.push_back(std::get<WindowFailure>(std::move(o)));
    }
    return run;
}

Histogram histogram(std::span<const double> samples, std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram needs at least one bin");
    if (samples.empty()) throw DataError("histogram of an empty sample");
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double width = (hi - lo) / static_cast<double>(bins);
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    h.edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (double x : samples) {
        std::size_t b = 0;
        if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>(std::floor((x - lo) / width)));
        ++h.counts[b];
    }
    return h;
}

McSummary summarize(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < kMinTailObservations) throw DataError("Monte Carlo summary needs at least 20 samples");
    const double nd = static_cast<double>(n);
    McSummary s;
    for (double x : samples) s.mean += x;
    s.mean /= nd;
    double m2 = 0.0, m3 = 0.0;
    for (double x : samples) {
        const double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    s.std = std::sqrt(m2 / (nd - 1.0));
    if (m2 > 0.0) {
        const double g1 = (m3 / nd) / std::pow(m2 / nd, 1.5);
        s.skewness = std::sqrt(nd * (nd - 1.0)) / (nd - 2.0) * g1;
    }
    // Same order-statistic convention as value_at_risk.
    s.quantile_05 = -value_at_risk(samples, 0.95);
    return s;
}

std::vector<double> vae_monte_carlo(const nn::VaeModel& model, const Matrix& standardized, const Standardizer& scale,
                                    const PortfolioSpec& portfolio, std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw ConfigError("Monte Carlo sample count must be positive");
    const auto post = nn::encode(model, standardized);
    const Eigen::Index d = post.mu.cols();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, standardized.rows() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto m = static_cast<Eigen::Index>(samples);
    Matrix mu(m, d), log_var(m, d), eps(m, d);
    for (Eigen::Index s = 0; s < m; ++s) {
        const Eigen::Index row = pick(rng);
        mu.row(s) = post.mu.row(row);
        log_var.row(s) = post.log_var.row(row);
        for (Eigen::Index j = 0; j < d; ++j) eps(s, j) = normal(rng);
    }
    const Matrix z = nn::sample_latent(mu, log_var, eps);
    const Matrix returns = destandardize(nn::decode(model, z), scale);
    return portfolio_returns(returns, portfolio);
}

McResult mc_window(const WindowView& window, const PortfolioSpec& portfolio, const VaeOptions& options) {
    const Standardizer scale = fit_standardizer(window);
    const Matrix z = standardize(window.data, scale);
    nn::VaeModel model = nn::train_vae(z, options.train, options.kl_weight);
    model.standardizer = scale;
    if (options.model_sink) options.model_sink(window.index, model);

    McResult res;
    res.window = window.index;
    res.start = window.start;
    res.length = window.length;
    res.samples = vae_monte_carlo(model, z, scale, portfolio, options.samples, mix_seed(options.mc_seed, window.index));
    for (double x : res.samples) {
        if (!std::isfinite(x)) throw TrainingDivergence("non-finite Monte Carlo sample in window " + std::to_string(window.index));
    }
    res.summary = summarize(res.samples);
    res.hist = histogram(res.samples, options.bins);
    return res;
}

PipelineRun<McResult> run_vae_mc(const ReturnMatrix& r, const PortfolioSpec& portfolio, const VaeOptions& options) {
    check_portfolio(r, portfolio);
    check_components(r, options.train.latent);
    nn::validate(options.train);
    const auto starts = window_starts(r.rows(), options.window, options.stride);

    using Outcome = std::variant<McResult, WindowFailure>;
    auto outcomes = parallel_map(starts.size(), options.threads, [&](std::size_t i) -> Outcome {
        const auto view = make_window(r, i, starts[i], options.window);
        VaeOptions opt = options;
        opt.train.seed = window_seed(options.train.seed, i);
        const Date first = r.dates[view.start];
        const Date last = r.dates[view.start + view.length - 1];
        try {
            McResult res = mc_window(view, portfolio, opt);
            res.first_date = first;
            res.last_date = last;
            return res;
        } catch (const TrainingDivergence& e) {
            return WindowFailure{i, first, last, e.what()};
        }
    });

    PipelineRun<McResult> run;
    for (auto& o : outcomes) {
        if (auto* ok = std::get_if<McResult>(&o)) run.results.push_back(std::move(*ok));
        else run.failures.push_back(std::get<WindowFailure>(std::move(o)));
    }
    return run;
}

std::vector<AttributionRow> attribute_window(const WindowView& window, PipelineKind kind, double k,
                                             const PortfolioSpec& portfolio, const SectorIndex& sectors,
                                             Eigen::Index components, const nn::TrainConfig& train) {
    Matrix latents;
    Decoder decode;
    std::string prefix;
    PcaModel pca;
    nn::AeModel ae;
    Standardizer scale;
    if (kind == PipelineKind::Pca) {
        pca = fit_pca(window, components);
        latents = transform(pca, window.data);
        decode = [&](const Matrix& s) { return inverse_transform(pca, s); };
        prefix = "PC";
    } else {
        nn::TrainConfig cfg = train;
        cfg.latent = components;
        scale = fit_standardizer(window);
        const Matrix z = standardize(window.data, scale);
        ae = nn::train_ae(z, cfg);
        latents = nn::encode(ae, z);
        decode = [&](const Matrix& l) { return destandardize(nn::decode(ae, l), scale); };
        prefix = "Z";
    }

    std::vector<AttributionRow> rows;
    for (Eigen::Index i = 0; i < latents.cols(); ++i) {
        const auto spec = StressSpec::single(static_cast<std::size_t>(i), k, +1);
        const auto s = apply_latent_stress(latents, decode, spec, portfolio, sectors);
        rows.push_back({prefix + std::to_string(i + 1), s.delta});
    }
    return rows;
}

std::optional<std::pair<std::size_t, std::size_t>> crisis_rows(const std::vector<Date>& dates, DateRange crisis) {
    const auto lo = std::lower_bound(dates.begin(), dates.end(), crisis.first);
    const auto hi = std::upper_bound(dates.begin(), dates.end(), crisis.last);
    if (lo >= hi) return std::nullopt;
    if (dates.front() > crisis.first || dates.back() < crisis.last) return std::nullopt;
    return std::pair{static_cast<std::size_t>(lo - dates.begin()), static_cast<std::size_t>(hi - dates.begin()) - 1};
}

std::vector<AttributionRow> component_attribution(const ReturnMatrix& r, PipelineKind kind, DateRange crisis, double k,
                                                  const PortfolioSpec& portfolio, Eigen::Index components,
                                                  const nn::TrainConfig& train) {
    check_portfolio(r, portfolio);
    check_components(r, components);
    const auto rows = crisis_rows(r.dates, crisis);
    if (!rows) {
        throw DataError("crisis range " + format_date(crisis.first) + ".." + format_date(crisis.last) +
                        " is not covered by the data");
    }
    const auto view = make_window(r, 0, rows->first, rows->second - rows->first + 1);
    return attribute_window(view, kind, k, portfolio, index_sectors(r.tickers, r.sectors), components, train);
}

std::optional<DateRange> crisis_preset(std::string_view name) {
    using namespace std::chrono;
    if (name == "gfc2008") return DateRange{2008y / September / 1, 2009y / March / 31};
    if (name == "covid2020") return DateRange{2020y / February / 1, 2020y / May / 31};
    return std::nullopt;
}

}  // namespace stresslab
