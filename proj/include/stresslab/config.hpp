#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stresslab/neural_nets.hpp"
#include "stresslab/pipelines.hpp"

namespace stresslab {

enum class Pipeline { Eda, Pca, Ae, Vae, Synth };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view name);

/// Fully resolved settings for one CLI run. Keys in the TOML config file use
/// the same names as the fields below.
struct RunConfig {
    Pipeline pipeline = Pipeline::Pca;

    std::filesystem::path prices = "data/prices.csv";
    std::filesystem::path sectors = "data/sectors.csv";
    std::filesystem::path spec;    // synth only
    std::filesystem::path output;  // empty: "data" for synth, "results/<pipeline>" otherwise

    std::optional<std::size_t> window;  // empty: 252 for pca, 504 for ae/vae
    std::size_t stride = 21;
    std::size_t d = 5;

    std::string stress = "multi";  // single | multi | none
    std::size_t stress_component = 1;  // 1-based
    double stress_k = 2.0;
    int stress_sign = +1;
    std::vector<double> stress_vector;  // empty: pipeline default

    std::vector<double> weights;  // empty: equal weight

    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    double validation_fraction = 0.2;
    std::size_t patience = 10;
    double learning_rate = 1e-3;
    std::size_t hidden = 16;
    double kl_weight = 1.0;

    std::size_t samples = 1000;
    std::size_t bins = 50;

    std::string crisis = "gfc2008";  // preset, "YYYY-MM-DD:YYYY-MM-DD", or "none"
    bool crisis_explicit = false;
    double attribution_k = 2.0;

    std::optional<std::size_t> adf_max_lag;

    std::uint64_t seed = 42;
    std::size_t threads = 1;
    bool dump_models = false;

    std::size_t window_length() const;
    std::filesystem::path output_dir() const;
    StressSpec stress_spec() const;
    nn::TrainConfig train_config() const;
};

/// Command-line values; anything set here beats the config file.
struct ConfigOverrides {
    std::optional<std::filesystem::path> prices, sectors, spec, output;
    std::optional<std::size_t> window, stride, d;
    std::optional<std::string> stress;
    std::optional<std::size_t> stress_component;
    std::optional<double> stress_k;
    std::optional<int> stress_sign;
    std::optional<std::vector<double>> stress_vector, weights;
    std::optional<std::size_t> batch_size, max_epochs, patience, hidden, samples, bins, threads, adf_max_lag;
    std::optional<double> validation_fraction, learning_rate, kl_weight, attribution_k;
    std::optional<std::string> crisis;
    std::optional<std::uint64_t> seed;
    std::optional<bool> dump_models;
};

/// Defaults, then the TOML file (if any), then STRESSLAB_SEED when no seed
/// was given, then flags. Unknown keys and type mismatches throw ConfigError.
RunConfig parse_config(Pipeline pipeline, const std::optional<std::filesystem::path>& file,
                       const ConfigOverrides& flags, std::optional<std::string_view> env_seed = std::nullopt);

/// Same as parse_config with the TOML document given as text.
RunConfig parse_config_text(Pipeline pipeline, std::string_view toml_text, const ConfigOverrides& flags,
                            std::optional<std::string_view> env_seed = std::nullopt);

/// Checks settings that need the data shape (d <= N, weight count, ...).
void validate(const RunConfig& cfg, std::size_t assets);

/// Crisis range from the preset name or "from:to"; nullopt for "none".
std::optional<DateRange> resolve_crisis(const RunConfig& cfg);

}  // namespace stresslab
