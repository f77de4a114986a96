#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stresslab/config.hpp"
#include "stresslab/error.hpp"
#include "stresslab/report.hpp"

namespace {

using stresslab::ConfigOverrides;
using stresslab::Pipeline;

// CLI11 binds to plain values; copy only the flags the user actually passed.
struct FlagValues {
    std::string config, prices, sectors, spec, out, stress, crisis;
    std::size_t window = 0, stride = 0, d = 0, stress_component = 0, batch_size = 0, max_epochs = 0, patience = 0,
                hidden = 0, samples = 0, bins = 0, threads = 0, adf_max_lag = 0;
    double stress_k = 0, validation_fraction = 0, learning_rate = 0, kl_weight = 0, attribution_k = 0;
    int stress_sign = 1;
    std::vector<double> stress_vector, weights;
    std::uint64_t seed = 0;
    bool dump_models = false;
};

struct Bound {
    CLI::App* app = nullptr;
    FlagValues v;
    CLI::Option* opt_config = nullptr;
    std::vector<std::pair<CLI::Option*, std::function<void(ConfigOverrides&, const FlagValues&)>>> setters;
};

template <typename T, typename Field>
void bind_flag(Bound& b, const std::string& name, T FlagValues::*member, Field ConfigOverrides::*target,
               const std::string& help) {
    auto* opt = b.app->add_option(name, b.v.*member, help);
    b.setters.emplace_back(opt, [member, target](ConfigOverrides& o, const FlagValues& v) { o.*target = v.*member; });
}

void add_common(Bound& b, bool training, bool stress, bool mc) {
    b.opt_config = b.app->add_option("--config", b.v.config, "TOML config file");
    bind_flag(b, "--prices", &FlagValues::prices, &ConfigOverrides::prices, "price CSV (date,<tickers>)");
    bind_flag(b, "--sectors", &FlagValues::sectors, &ConfigOverrides::sectors, "sector map CSV (ticker,sector)");
    bind_flag(b, "--out", &FlagValues::out, &ConfigOverrides::output, "output directory");
    bind_flag(b, "--seed", &FlagValues::seed, &ConfigOverrides::seed, "master seed");
    bind_flag(b, "--threads", &FlagValues::threads, &ConfigOverrides::threads, "worker cap (0 = all cores)");
    if (!stress && !mc) {
        bind_flag(b, "--adf-max-lag", &FlagValues::adf_max_lag, &ConfigOverrides::adf_max_lag, "ADF lag search bound");
        return;
    }
    bind_flag(b, "--window", &FlagValues::window, &ConfigOverrides::window, "rolling window length");
    bind_flag(b, "--stride", &FlagValues::stride, &ConfigOverrides::stride, "rolling window stride");
    bind_flag(b, "--d", &FlagValues::d, &ConfigOverrides::d, "latent dimension");
    bind_flag(b, "--weights", &FlagValues::weights, &ConfigOverrides::weights, "portfolio weights (default equal)");
    auto* dump = b.app->add_flag("--dump-models", b.v.dump_models, "write fitted models under models/");
    b.setters.emplace_back(dump, [](ConfigOverrides& o, const FlagValues& v) { o.dump_models = v.dump_models; });
    if (stress) {
        bind_flag(b, "--stress", &FlagValues::stress, &ConfigOverrides::stress, "single | multi | none");
        bind_flag(b, "--component", &FlagValues::stress_component, &ConfigOverrides::stress_component,
                  "1-based latent index for single stress");
        bind_flag(b, "--k", &FlagValues::stress_k, &ConfigOverrides::stress_k, "single stress size in sigmas");
        bind_flag(b, "--sign", &FlagValues::stress_sign, &ConfigOverrides::stress_sign, "+1 or -1");
        bind_flag(b, "--stress-vector", &FlagValues::stress_vector, &ConfigOverrides::stress_vector,
                  "multi stress multipliers");
        bind_flag(b, "--crisis", &FlagValues::crisis, &ConfigOverrides::crisis,
                  "attribution period: gfc2008, covid2020, FROM:TO or none");
        bind_flag(b, "--attribution-k", &FlagValues::attribution_k, &ConfigOverrides::attribution_k,
                  "attribution stress size in sigmas");
    }
    if (training) {
        bind_flag(b, "--batch-size", &FlagValues::batch_size, &ConfigOverrides::batch_size, "minibatch size");
        bind_flag(b, "--epochs", &FlagValues::max_epochs, &ConfigOverrides::max_epochs, "maximum epochs");
        bind_flag(b, "--patience", &FlagValues::patience, &ConfigOverrides::patience, "early-stopping patience");
        bind_flag(b, "--val-frac", &FlagValues::validation_fraction, &ConfigOverrides::validation_fraction,
                  "validation tail fraction");
        bind_flag(b, "--lr", &FlagValues::learning_rate, &ConfigOverrides::learning_rate, "Adam learning rate");
        bind_flag(b, "--hidden", &FlagValues::hidden, &ConfigOverrides::hidden, "hidden layer width");
    }
    if (mc) {
        bind_flag(b, "--samples", &FlagValues::samples, &ConfigOverrides::samples, "Monte Carlo samples per window");
        bind_flag(b, "--bins", &FlagValues::bins, &ConfigOverrides::bins, "histogram bins");
        bind_flag(b, "--kl-weight", &FlagValues::kl_weight, &ConfigOverrides::kl_weight, "KL term weight");
    }
}

ConfigOverrides collect(const Bound& b) {
    ConfigOverrides o;
    for (const auto& [opt, set] : b.setters) {
        if (opt->count() > 0) set(o, b.v);
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-factor portfolio stress testing"};
    app.require_subcommand(1);

    std::vector<std::pair<Pipeline, Bound>> subs;
    subs.reserve(5);
    const auto add = [&](Pipeline p, const char* help, bool training, bool stress, bool mc) {
        Bound b;
        b.app = app.add_subcommand(std::string(stresslab::to_string(p)), help);
        subs.emplace_back(p, std::move(b));
        auto& ref = subs.back().second;
        add_common(ref, training, stress, mc);
        return &ref;
    };
    add(Pipeline::Eda, "descriptive statistics, sector correlation, ADF and GARCH per asset", false, false, false);
    add(Pipeline::Pca, "rolling PCA latent stress", false, true, false);
    add(Pipeline::Ae, "rolling autoencoder latent stress", true, true, false);
    add(Pipeline::Vae, "rolling VAE Monte Carlo scenarios", true, false, true);

    Bound synth;
    synth.app = app.add_subcommand("synth", "generate a synthetic factor market");
    synth.opt_config = synth.app->add_option("--config", synth.v.config, "TOML config file");
    bind_flag(synth, "--spec", &FlagValues::spec, &ConfigOverrides::spec, "synthetic market spec (TOML)");
    bind_flag(synth, "--out", &FlagValues::out, &ConfigOverrides::output, "output directory");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "summarize and verify an output directory");
    report->add_option("dir", report_dir, "output directory containing manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (report->parsed()) {
            stresslab::print_report(report_dir, std::cout);
            return 0;
        }
        const char* env = std::getenv("STRESSLAB_SEED");
        const std::optional<std::string_view> env_seed =
            env ? std::optional<std::string_view>(env) : std::nullopt;

        const Bound* chosen = &synth;
        Pipeline pipeline = Pipeline::Synth;
        for (const auto& [p, b] : subs) {
            if (b.app->parsed()) {
                chosen = &b;
                pipeline = p;
            }
        }
        std::optional<std::filesystem::path> file;
        if (chosen->opt_config->count() > 0) file = chosen->v.config;
        const auto cfg = stresslab::parse_config(pipeline, file, collect(*chosen), env_seed);
        const auto summary = stresslab::run(cfg, std::cerr);
        std::cerr << "wrote " << summary.files.size() << " files + manifest.json to "
                  << summary.output_dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return stresslab::exit_code_for(e);
    }
}
