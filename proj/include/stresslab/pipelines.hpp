#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stresslab/factor_pca.hpp"
#include "stresslab/market_data.hpp"
#include "stresslab/neural_nets.hpp"
#include "stresslab/risk_metrics.hpp"

namespace stresslab {

/// A shift in latent space expressed in units of each component's
/// within-window standard deviation.
struct StressSpec {
    enum class Kind { Single, Multi };

    Kind kind = Kind::Multi;
    std::size_t component = 0;        // Single only
    double magnitude = 2.0;           // Single only, multiple of sigma_i
    std::vector<double> multipliers;  // Multi only, one per component
    int sign = +1;

    static StressSpec single(std::size_t component, double magnitude = 2.0, int sign = +1);
    static StressSpec multi(std::vector<double> multipliers, int sign = +1);
    /// Multi-factor spec of zeros: the reconstruction is left unchanged.
    static StressSpec none(std::size_t components);

    /// Per-column latent shift given the column standard deviations.
    Vector shifts(const Vector& sigma) const;
    std::string describe() const;
};

void validate(const StressSpec& spec, Eigen::Index components);

/// Default multi-factor vectors for the PCA and AE pipelines.
inline const std::vector<double> kPcaMultiFactor{2.0, -1.5, 1.0, 0.5, -0.5};
inline const std::vector<double> kAeMultiFactor{2.0, -1.0, 1.5, -0.5, 1.0};

struct WindowResult {
    std::size_t window = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    Date first_date{};
    Date last_date{};
    RiskReport baseline;
    RiskReport stressed;
    DeltaReport delta;
    SectorShift sectors;
    StressSpec stress;
};

struct WindowFailure {
    std::size_t window = 0;
    Date first_date{};
    Date last_date{};
    std::string reason;
};

template <typename T>
struct PipelineRun {
    std::vector<T> results;
    std::vector<WindowFailure> failures;
};

/// Baseline and stressed reconstructions of one window plus derived metrics.
struct LatentStress {
    Matrix baseline_returns;
    Matrix stressed_returns;
    Vector latent_std;
    RiskReport baseline;
    RiskReport stressed;
    DeltaReport delta;
    SectorShift sectors;
};

using Decoder = std::function<Matrix(const Matrix&)>;

/// Shifts every row of `latents` by spec.shifts(sample std of each column)
/// and maps both versions back to return space through `decode`.
LatentStress apply_latent_stress(const Matrix& latents, const Decoder& decode, const StressSpec& spec,
                                 const PortfolioSpec& portfolio, const SectorIndex& sectors);

struct PcaOptions {
    std::size_t window = 252;
    std::size_t stride = 21;
    Eigen::Index components = 5;
    std::size_t threads = 1;
    /// Called once per window with its fitted model; may run concurrently.
    std::function<void(std::size_t, const PcaModel&)> model_sink;
};

struct AeOptions {
    std::size_t window = 504;
    std::size_t stride = 21;
    std::size_t threads = 1;
    nn::TrainConfig train;  // train.latent is the latent dimension d
    std::function<void(std::size_t, const nn::AeModel&)> model_sink;
};

struct VaeOptions {
    std::size_t window = 504;
    std::size_t stride = 21;
    std::size_t threads = 1;
    std::size_t samples = 1000;
    std::size_t bins = 50;
    double kl_weight = 1.0;
    std::uint64_t mc_seed = 42;
    nn::TrainConfig train;
    std::function<void(std::size_t, const nn::VaeModel&)> model_sink;
};

LatentStress stress_window_pca(const WindowView& window, Eigen::Index components, const StressSpec& spec,
                               const PortfolioSpec& portfolio, const SectorIndex& sectors);

/// Fits the standardizer, trains the autoencoder with seed train.seed and
/// stresses the window.
LatentStress stress_window_ae(const WindowView& window, const nn::TrainConfig& train, const StressSpec& spec,
                              const PortfolioSpec& portfolio, const SectorIndex& sectors,
                              nn::AeModel* trained = nullptr);

std::vector<WindowResult> run_pca_stress(const ReturnMatrix& r, const StressSpec& spec, const PortfolioSpec& portfolio,
                                         const PcaOptions& options);

/// Windows whose training diverges are skipped and recorded as failures.
PipelineRun<WindowResult> run_ae_stress(const ReturnMatrix& r, const StressSpec& spec, const PortfolioSpec& portfolio,
                                        const AeOptions& options);

struct McSummary {
    double mean = 0.0;
    double std = 0.0;
    double skewness = 0.0;
    double quantile_05 = 0.0;
};

struct Histogram {
    std::vector<double> edges;  // bins + 1
    std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the maximum falls in the last bin.
Histogram histogram(std::span<const double> samples, std::size_t bins);

McSummary summarize(std::span<const double> samples);

struct McResult {
    std::size_t window = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    Date first_date{};
    Date last_date{};
    std::vector<double> samples;
    McSummary summary;
    Histogram hist;
};

/// Draws `samples` portfolio returns from the trained VAE: pick a window row
/// uniformly, sample z from that row's posterior, decode, destandardize.
std::vector<double> vae_monte_carlo(const nn::VaeModel& model, const Matrix& standardized, const Standardizer& scale,
                                    const PortfolioSpec& portfolio, std::size_t samples, std::uint64_t seed);

McResult mc_window(const WindowView& window, const PortfolioSpec& portfolio, const VaeOptions& options);

PipelineRun<McResult> run_vae_mc(const ReturnMatrix& r, const PortfolioSpec& portfolio, const VaeOptions& options);

enum class PipelineKind { Pca, Ae };

struct AttributionRow {
    std::string factor;  // PC1.. or Z1..
    DeltaReport delta;
};

/// Stresses each latent dimension alone at +k sigma on one window.
std::vector<AttributionRow> attribute_window(const WindowView& window, PipelineKind kind, double k,
                                             const PortfolioSpec& portfolio, const SectorIndex& sectors,
                                             Eigen::Index components, const nn::TrainConfig& train);

/// attribute_window on the rows dated inside `crisis`.
std::vector<AttributionRow> component_attribution(const ReturnMatrix& r, PipelineKind kind, DateRange crisis, double k,
                                                  const PortfolioSpec& portfolio, Eigen::Index components,
                                                  const nn::TrainConfig& train);

/// Row range [first, last] of `dates` inside the crisis, or nullopt if the
/// data does not cover it.
std::optional<std::pair<std::size_t, std::size_t>> crisis_rows(const std::vector<Date>& dates, DateRange crisis);

/// Named crisis periods: "gfc2008", "covid2020".
std::optional<DateRange> crisis_preset(std::string_view name);

/// Per-window seed streams.
std::uint64_t window_seed(std::uint64_t master, std::size_t window);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace stresslab
