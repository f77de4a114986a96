#include "stresslab/config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include <toml.hpp>

#include "stresslab/error.hpp"

namespace stresslab {

std::string_view to_string(Pipeline p) {
    switch (p) {
        case Pipeline::Eda: return "eda";
        case Pipeline::Pca: return "pca";
        case Pipeline::Ae: return "ae";
        case Pipeline::Vae: return "vae";
        case Pipeline::Synth: return "synth";
    }
    return "unknown";
}

Pipeline parse_pipeline(std::string_view name) {
    for (auto p : {Pipeline::Eda, Pipeline::Pca, Pipeline::Ae, Pipeline::Vae, Pipeline::Synth}) {
        if (to_string(p) == name) return p;
    }
    throw ConfigError("unknown pipeline '" + std::string(name) + "'");
}

std::size_t RunConfig::window_length() const {
    if (window) return *window;
    return pipeline == Pipeline::Pca ? 252 : 504;
}

std::filesystem::path RunConfig::output_dir() const {
    if (!output.empty()) return output;
    if (pipeline == Pipeline::Synth) return "data";
    return std::filesystem::path("results") / std::string(to_string(pipeline));
}

StressSpec RunConfig::stress_spec() const {
    if (stress == "single") return StressSpec::single(stress_component - 1, stress_k, stress_sign);
    if (stress == "none") return StressSpec::none(d);
    if (stress == "multi") {
        if (!stress_vector.empty()) return StressSpec::multi(stress_vector, stress_sign);
        return StressSpec::multi(pipeline == Pipeline::Ae ? kAeMultiFactor : kPcaMultiFactor, stress_sign);
    }
    throw ConfigError("stress must be 'single', 'multi' or 'none', got '" + stress + "'");
}

nn::TrainConfig RunConfig::train_config() const {
    nn::TrainConfig t;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.validation_fraction = validation_fraction;
    t.patience = patience;
    t.learning_rate = learning_rate;
    t.seed = seed;
    t.hidden = static_cast<Eigen::Index>(hidden);
    t.latent = static_cast<Eigen::Index>(d);
    return t;
}

namespace {

[[noreturn]] void type_error(std::string_view key, std::string_view expected) {
    throw ConfigError("config key '" + std::string(key) + "' must be " + std::string(expected));
}

std::size_t as_count(const toml::node& n, std::string_view key) {
    const auto v = n.value<std::int64_t>();
    if (!n.is_integer() || !v || *v < 0) type_error(key, "a non-negative integer");
    return static_cast<std::size_t>(*v);
}

double as_number(const toml::node& n, std::string_view key) {
    if (!n.is_number()) type_error(key, "a number");
    return *n.value<double>();
}

std::string as_string(const toml::node& n, std::string_view key) {
    if (!n.is_string()) type_error(key, "a string");
    return *n.value<std::string>();
}

bool as_bool(const toml::node& n, std::string_view key) {
    if (!n.is_boolean()) type_error(key, "a boolean");
    return *n.value<bool>();
}

std::vector<double> as_numbers(const toml::node& n, std::string_view key) {
    const auto* arr = n.as_array();
    if (!arr) type_error(key, "an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) out.push_back(as_number(e, key));
    return out;
}

using Setter = std::function<void(RunConfig&, const toml::node&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table{
        {"prices", [](RunConfig& c, const toml::node& n, std::string_view k) { c.prices = as_string(n, k); }},
        {"sectors", [](RunConfig& c, const toml::node& n, std::string_view k) { c.sectors = as_string(n, k); }},
        {"spec", [](RunConfig& c, const toml::node& n, std::string_view k) { c.spec = as_string(n, k); }},
        {"output", [](RunConfig& c, const toml::node& n, std::string_view k) { c.output = as_string(n, k); }},
        {"window", [](RunConfig& c, const toml::node& n, std::string_view k) { c.window = as_count(n, k); }},
        {"stride", [](RunConfig& c, const toml::node& n, std::string_view k) { c.stride = as_count(n, k); }},
        {"d", [](RunConfig& c, const toml::node& n, std::string_view k) { c.d = as_count(n, k); }},
        {"stress", [](RunConfig& c, const toml::node& n, std::string_view k) { c.stress = as_string(n, k); }},
        {"stress_component",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.stress_component = as_count(n, k); }},
        {"stress_k", [](RunConfig& c, const toml::node& n, std::string_view k) { c.stress_k = as_number(n, k); }},
        {"stress_sign",
         [](RunConfig& c, const toml::node& n, std::string_view k) {
             const auto v = n.value<std::int64_t>();
             if (!n.is_integer() || !v) type_error(k, "+1 or -1");
             c.stress_sign = static_cast<int>(*v);
         }},
        {"stress_vector",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.stress_vector = as_numbers(n, k); }},
        {"weights",
         [](RunConfig& c, const toml::node& n, std::string_view k) {
             if (n.is_string() && *n.value<std::string>() == "equal") c.weights.clear();
             else c.weights = as_numbers(n, k);
         }},
        {"batch_size", [](RunConfig& c, const toml::node& n, std::string_view k) { c.batch_size = as_count(n, k); }},
        {"max_epochs", [](RunConfig& c, const toml::node& n, std::string_view k) { c.max_epochs = as_count(n, k); }},
        {"validation_fraction",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.validation_fraction = as_number(n, k); }},
        {"patience", [](RunConfig& c, const toml::node& n, std::string_view k) { c.patience = as_count(n, k); }},
        {"learning_rate",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.learning_rate = as_number(n, k); }},
        {"hidden", [](RunConfig& c, const toml::node& n, std::string_view k) { c.hidden = as_count(n, k); }},
        {"kl_weight", [](RunConfig& c, const toml::node& n, std::string_view k) { c.kl_weight = as_number(n, k); }},
        {"samples", [](RunConfig& c, const toml::node& n, std::string_view k) { c.samples = as_count(n, k); }},
        {"bins", [](RunConfig& c, const toml::node& n, std::string_view k) { c.bins = as_count(n, k); }},
        {"crisis",
         [](RunConfig& c, const toml::node& n, std::string_view k) {
             c.crisis = as_string(n, k);
             c.crisis_explicit = true;
         }},
        {"attribution_k",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.attribution_k = as_number(n, k); }},
        {"adf_max_lag", [](RunConfig& c, const toml::node& n, std::string_view k) { c.adf_max_lag = as_count(n, k); }},
        {"seed",
         [](RunConfig& c, const toml::node& n, std::string_view k) { c.seed = static_cast<std::uint64_t>(as_count(n, k)); }},
        {"threads", [](RunConfig& c, const toml::node& n, std::string_view k) { c.threads = as_count(n, k); }},
        {"dump_models", [](RunConfig& c, const toml::node& n, std::string_view k) { c.dump_models = as_bool(n, k); }},
    };
    return table;
}

template <typename T, typename U>
void take(T& field, const std::optional<U>& flag) {
    if (flag) field = *flag;
}

RunConfig resolve(Pipeline pipeline, const toml::table* file, const ConfigOverrides& f,
                  std::optional<std::string_view> env_seed) {
    RunConfig c;
    c.pipeline = pipeline;
    bool seed_from_file = false;
    if (file) {
        for (const auto& [key, node] : *file) {
            const auto it = setters().find(key.str());
            if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key.str()) + "'");
            it->second(c, node, key.str());
            seed_from_file |= key.str() == "seed";
        }
    }
    if (!seed_from_file && env_seed && !env_seed->empty()) {
        std::uint64_t s = 0;
        auto [p, ec] = std::from_chars(env_seed->data(), env_seed->data() + env_seed->size(), s);
        if (ec != std::errc{} || p != env_seed->data() + env_seed->size()) {
            throw ConfigError("STRESSLAB_SEED must be a non-negative integer");
        }
        c.seed = s;
    }

    take(c.prices, f.prices);
    take(c.sectors, f.sectors);
    take(c.spec, f.spec);
    take(c.output, f.output);
    if (f.window) c.window = *f.window;
    take(c.stride, f.stride);
    take(c.d, f.d);
    take(c.stress, f.stress);
    take(c.stress_component, f.stress_component);
    take(c.stress_k, f.stress_k);
    take(c.stress_sign, f.stress_sign);
    take(c.stress_vector, f.stress_vector);
    take(c.weights, f.weights);
    take(c.batch_size, f.batch_size);
    take(c.max_epochs, f.max_epochs);
    take(c.patience, f.patience);
    take(c.hidden, f.hidden);
    take(c.samples, f.samples);
    take(c.bins, f.bins);
    take(c.threads, f.threads);
    if (f.adf_max_lag) c.adf_max_lag = *f.adf_max_lag;
    take(c.validation_fraction, f.validation_fraction);
    take(c.learning_rate, f.learning_rate);
    take(c.kl_weight, f.kl_weight);
    take(c.attribution_k, f.attribution_k);
    if (f.crisis) {
        c.crisis = *f.crisis;
        c.crisis_explicit = true;
    }
    take(c.seed, f.seed);
    take(c.dump_models, f.dump_models);

    // Shape-independent checks.
    if (c.stress != "single" && c.stress != "multi" && c.stress != "none") {
        throw ConfigError("stress must be 'single', 'multi' or 'none', got '" + c.stress + "'");
    }
    if (c.stress_sign != 1 && c.stress_sign != -1) throw ConfigError("stress_sign must be +1 or -1");
    if (c.stress_component < 1) throw ConfigError("stress_component is 1-based and must be at least 1");
    if (c.stride < 1) throw ConfigError("stride must be at least 1");
    if (c.d < 1) throw ConfigError("d must be at least 1");
    if (c.window_length() < 2) throw ConfigError("window must be at least 2");
    if (c.samples < 1) throw ConfigError("samples must be at least 1");
    if (c.bins < 1) throw ConfigError("bins must be at least 1");
    if (c.pipeline == Pipeline::Synth && c.spec.empty()) throw ConfigError("synth needs a spec file (--spec)");
    nn::validate(c.train_config());
    resolve_crisis(c);
    return c;
}

}  // namespace

RunConfig parse_config(Pipeline pipeline, const std::optional<std::filesystem::path>& file,
                       const ConfigOverrides& flags, std::optional<std::string_view> env_seed) {
    if (!file) return resolve(pipeline, nullptr, flags, env_seed);
    if (!std::filesystem::exists(*file)) throw ConfigError("config file " + file->string() + " does not exist");
    toml::table tbl;
    try {
        tbl = toml::parse_file(file->string());
    } catch (const toml::parse_error& e) {
        throw ConfigError(file->string() + ": " + std::string(e.description()));
    }
    return resolve(pipeline, &tbl, flags, env_seed);
}

RunConfig parse_config_text(Pipeline pipeline, std::string_view toml_text, const ConfigOverrides& flags,
                            std::optional<std::string_view> env_seed) {
    toml::table tbl;
    try {
        tbl = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw ConfigError("config: " + std::string(e.description()));
    }
    return resolve(pipeline, &tbl, flags, env_seed);
}

void validate(const RunConfig& cfg, std::size_t assets) {
    if (cfg.d > assets) {
        throw ConfigError("d = " + std::to_string(cfg.d) + " exceeds the number of assets N = " +
                          std::to_string(assets) + " (need d <= N)");
    }
    if (!cfg.weights.empty() && cfg.weights.size() != assets) {
        throw ConfigError("weights has " + std::to_string(cfg.weights.size()) + " entries for " +
                          std::to_string(assets) + " assets");
    }
    if (cfg.stress == "single" && cfg.stress_component > cfg.d) {
        throw ConfigError("stress_component " + std::to_string(cfg.stress_component) + " exceeds d = " +
                          std::to_string(cfg.d));
    }
    if (cfg.stress == "multi" && !cfg.stress_vector.empty() && cfg.stress_vector.size() != cfg.d) {
        throw ConfigError("stress_vector needs d = " + std::to_string(cfg.d) + " entries");
    }
    if (cfg.stress == "multi" && cfg.stress_vector.empty() && cfg.d != kPcaMultiFactor.size() &&
        (cfg.pipeline == Pipeline::Pca || cfg.pipeline == Pipeline::Ae)) {
        throw ConfigError("the default stress vector has 5 entries; set stress_vector for d = " + std::to_string(cfg.d));
    }
}

std::optional<DateRange> resolve_crisis(const RunConfig& cfg) {
    if (cfg.crisis == "none" || cfg.crisis.empty()) return std::nullopt;
    if (auto preset = crisis_preset(cfg.crisis)) return preset;
    const auto colon = cfg.crisis.find(':');
    if (colon == std::string::npos) {
        throw ConfigError("crisis must be a preset (gfc2008, covid2020), 'none', or 'YYYY-MM-DD:YYYY-MM-DD'");
    }
    try {
        const DateRange range{parse_date(std::string_view(cfg.crisis).substr(0, colon)),
                              parse_date(std::string_view(cfg.crisis).substr(colon + 1))};
        if (range.last < range.first) throw ConfigError("crisis range ends before it starts");
        return range;
    } catch (const DataError& e) {
        throw ConfigError(std::string("crisis: ") + e.what());
    }
}

}  // namespace stresslab
