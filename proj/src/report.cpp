#include "stresslab/report.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "stresslab/csv.hpp"
#include "stresslab/diagnostics.hpp"
#include "stresslab/error.hpp"
#include "stresslab/market_data.hpp"
#include "stresslab/parallel.hpp"

namespace stresslab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        const auto got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got)) != 1) {
            throw Error("SHA-256 update failed");
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw Error("SHA-256 final failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

void write_window_results(const std::vector<WindowResult>& results, const fs::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("window"), std::string_view("start_date"), std::string_view("end_date"),
          std::string_view("stress"), std::string_view("base_var"), std::string_view("base_es"),
          std::string_view("base_dd"), std::string_view("stressed_var"), std::string_view("stressed_es"),
          std::string_view("stressed_dd"), std::string_view("d_var"), std::string_view("d_es"),
          std::string_view("d_dd"));
    for (const auto& r : results) {
        w.row(r.window, std::string_view(format_date(r.first_date)), std::string_view(format_date(r.last_date)),
              std::string_view(r.stress.describe()), r.baseline.var_95, r.baseline.es_95, r.baseline.max_drawdown,
              r.stressed.var_95, r.stressed.es_95, r.stressed.max_drawdown, r.delta.d_var, r.delta.d_es,
              r.delta.d_drawdown);
    }
}

void write_sector_shifts(const std::vector<WindowResult>& results, const fs::path& path) {
    csv::Writer w(path);
    w.field("window").field("end_date");
    if (!results.empty()) {
        for (const auto& l : results.front().sectors.labels) w.field(l);
    }
    w.end_row();
    for (const auto& r : results) {
        w.field(r.window).field(format_date(r.last_date));
        for (double s : r.sectors.shifts) w.field(s);
        w.end_row();
    }
}

void write_attribution(const std::vector<AttributionRow>& rows, const fs::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("factor"), std::string_view("d_var"), std::string_view("d_es"),
          std::string_view("d_drawdown"));
    for (const auto& r : rows) w.row(std::string_view(r.factor), r.delta.d_var, r.delta.d_es, r.delta.d_drawdown);
}

void write_mc_samples(const std::vector<McResult>& results, const fs::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("window"), std::string_view("sample"), std::string_view("portfolio_return"));
    for (const auto& r : results) {
        for (std::size_t m = 0; m < r.samples.size(); ++m) w.row(r.window, m, r.samples[m]);
    }
}

void write_mc_hist(const std::vector<McResult>& results, const fs::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("window"), std::string_view("bin"), std::string_view("lower"), std::string_view("upper"),
          std::string_view("count"));
    for (const auto& r : results) {
        for (std::size_t b = 0; b < r.hist.counts.size(); ++b) {
            w.row(r.window, b, r.hist.edges[b], r.hist.edges[b + 1], r.hist.counts[b]);
        }
    }
}

void write_mc_summary(const std::vector<McResult>& results, const fs::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("window"), std::string_view("start_date"), std::string_view("end_date"),
          std::string_view("samples"), std::string_view("mean"), std::string_view("std"),
          std::string_view("skewness"), std::string_view("q05"));
    for (const auto& r : results) {
        w.row(r.window, std::string_view(format_date(r.first_date)), std::string_view(format_date(r.last_date)),
              r.samples.size(), r.summary.mean, r.summary.std, r.summary.skewness, r.summary.quantile_05);
    }
}

namespace {

std::string utc_timestamp() {
    std::time_t t = 0;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json config_snapshot(const RunConfig& c) {
    json j;
    j["pipeline"] = std::string(to_string(c.pipeline));
    j["prices"] = c.prices.generic_string();
    j["sectors"] = c.sectors.generic_string();
    j["spec"] = c.spec.generic_string();
    j["output"] = c.output_dir().generic_string();
    j["window"] = c.window_length();
    j["stride"] = c.stride;
    j["d"] = c.d;
    j["stress"] = c.stress;
    j["stress_component"] = c.stress_component;
    j["stress_k"] = c.stress_k;
    j["stress_sign"] = c.stress_sign;
    j["stress_vector"] = c.stress_vector;
    j["weights"] = c.weights;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["validation_fraction"] = c.validation_fraction;
    j["patience"] = c.patience;
    j["learning_rate"] = c.learning_rate;
    j["hidden"] = c.hidden;
    j["kl_weight"] = c.kl_weight;
    j["samples"] = c.samples;
    j["bins"] = c.bins;
    j["crisis"] = c.crisis;
    j["attribution_k"] = c.attribution_k;
    j["adf_max_lag"] = c.adf_max_lag ? json(*c.adf_max_lag) : json(nullptr);
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["dump_models"] = c.dump_models;
    return j;
}

// Removes the files a previous run recorded in this directory so the new
// manifest describes the directory exactly.
void clear_previous_run(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.json";
    if (!fs::exists(manifest)) return;
    try {
        std::ifstream in(manifest);
        const auto j = json::parse(in);
        for (const auto& f : j.at("files")) fs::remove(dir / f.at("path").get<std::string>());
    } catch (const std::exception&) {
        // Unreadable manifest: leave the directory as is.
    }
    fs::remove(manifest);
    if (fs::exists(dir / "models") && fs::is_empty(dir / "models")) fs::remove(dir / "models");
}

std::vector<fs::path> list_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir);
        if (rel == "manifest.json") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

PortfolioSpec make_portfolio(const RunConfig& cfg, std::size_t assets) {
    if (cfg.weights.empty()) return PortfolioSpec::equal_weight(assets);
    return PortfolioSpec(Eigen::Map<const Vector>(cfg.weights.data(), static_cast<Eigen::Index>(cfg.weights.size())));
}

std::string window_file(std::size_t index, std::string_view ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "window_%04zu.", index);
    return std::string(buf) + std::string(ext);
}

struct RunContext {
    const RunConfig& cfg;
    std::ostream& log;
    fs::path out;
    RunSummary summary;
    json inputs = json::array();
};

// Called once the inputs have loaded and validated, so a run that fails early
// leaves the previous results in place.
void prepare_output(const RunContext& ctx) {
    try {
        fs::create_directories(ctx.out);
    } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
    }
    clear_previous_run(ctx.out);
}

void add_input(RunContext& ctx, const fs::path& p) {
    ctx.inputs.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
}

ReturnMatrix load_returns(RunContext& ctx) {
    const auto prices = ingest_prices(ctx.cfg.prices, ctx.cfg.sectors);
    add_input(ctx, ctx.cfg.prices);
    add_input(ctx, ctx.cfg.sectors);
    auto r = compute_returns(prices);
    ctx.log << "loaded " << r.rows() << " return rows x " << r.cols() << " assets\n";
    validate(ctx.cfg, r.cols());
    prepare_output(ctx);
    return r;
}

template <typename T>
void record_windows(RunContext& ctx, const std::vector<T>& ok, const std::vector<WindowFailure>& failed) {
    for (const auto& r : ok) {
        ctx.summary.windows.push_back({r.window, format_date(r.first_date), format_date(r.last_date), "ok", ""});
    }
    for (const auto& f : failed) {
        ctx.summary.windows.push_back({f.window, format_date(f.first_date), format_date(f.last_date), "failed", f.reason});
        ctx.log << "window " << f.window << " skipped: " << f.reason << "\n";
    }
    std::sort(ctx.summary.windows.begin(), ctx.summary.windows.end(),
              [](const auto& a, const auto& b) { return a.window < b.window; });
}

void maybe_attribution(RunContext& ctx, const ReturnMatrix& r, PipelineKind kind, const PortfolioSpec& portfolio) {
    const auto crisis = resolve_crisis(ctx.cfg);
    if (!crisis) return;
    if (!crisis_rows(r.dates, *crisis)) {
        const std::string msg = "crisis " + ctx.cfg.crisis + " not covered by the data; attribution.csv skipped";
        if (ctx.cfg.crisis_explicit) throw DataError(msg);
        ctx.summary.notes.push_back(msg);
        ctx.log << msg << "\n";
        return;
    }
    const auto rows = component_attribution(r, kind, *crisis, ctx.cfg.attribution_k, portfolio,
                                            static_cast<Eigen::Index>(ctx.cfg.d), ctx.cfg.train_config());
    write_attribution(rows, ctx.out / "attribution.csv");
}

void run_synth(RunContext& ctx) {
    const auto spec = read_synth_spec(ctx.cfg.spec);
    add_input(ctx, ctx.cfg.spec);
    const auto table = generate_synthetic(spec);
    prepare_output(ctx);
    write_price_csv(table, ctx.out / "prices.csv");
    write_sector_csv(table, ctx.out / "sectors.csv");
    ctx.log << "synthetic market: " << table.rows() << " days x " << table.cols() << " assets\n";
}

void run_eda(RunContext& ctx) {
    const auto r = load_returns(ctx);
    const auto stats = descriptive_stats(r);
    {
        csv::Writer w(ctx.out / "stats.csv");
        w.row(std::string_view("ticker"), std::string_view("mean"), std::string_view("std"), std::string_view("skew"));
        for (std::size_t j = 0; j < stats.tickers.size(); ++j) {
            w.row(std::string_view(stats.tickers[j]), stats.columns[j].mean, stats.columns[j].std,
                  stats.columns[j].skewness);
        }
    }
    {
        const auto sc = sector_correlation(r);
        csv::Writer w(ctx.out / "sector_corr.csv");
        w.field("sector");
        for (const auto& l : sc.labels) w.field(l);
        w.end_row();
        for (std::size_t a = 0; a < sc.labels.size(); ++a) {
            w.field(sc.labels[a]);
            for (std::size_t b = 0; b < sc.labels.size(); ++b) {
                w.field(sc.corr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
            }
            w.end_row();
        }
    }
    const std::size_t max_lag = ctx.cfg.adf_max_lag.value_or(default_adf_max_lag(r.rows()));
    {
        csv::Writer w(ctx.out / "adf.csv");
        w.row(std::string_view("ticker"), std::string_view("statistic"), std::string_view("lag"),
              std::string_view("nobs"), std::string_view("reject_1pct"), std::string_view("reject_5pct"),
              std::string_view("reject_10pct"), std::string_view("p_lower"), std::string_view("p_upper"));
        for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
            const Vector col = r.values.col(j);
            const auto a = adf_test({col.data(), static_cast<std::size_t>(col.size())}, max_lag);
            w.row(std::string_view(r.tickers[static_cast<std::size_t>(j)]), a.statistic, a.lag, a.nobs,
                  int(a.reject_1), int(a.reject_5), int(a.reject_10), a.p_lower, a.p_upper);
        }
    }
    const auto fits = parallel_map(r.cols(), ctx.cfg.threads, [&](std::size_t j) {
        const Vector col = r.values.col(static_cast<Eigen::Index>(j));
        return garch_fit({col.data(), static_cast<std::size_t>(col.size())});
    });
    csv::Writer w(ctx.out / "garch.csv");
    w.row(std::string_view("ticker"), std::string_view("omega"), std::string_view("alpha"), std::string_view("beta"),
          std::string_view("persistence"), std::string_view("converged"));
    for (std::size_t j = 0; j < fits.size(); ++j) {
        const auto& f = fits[j];
        w.row(std::string_view(r.tickers[j]), f.params.omega, f.params.alpha, f.params.beta, f.persistence,
              int(f.converged));
    }
}

void run_pca(RunContext& ctx) {
    const auto r = load_returns(ctx);
    const auto portfolio = make_portfolio(ctx.cfg, r.cols());
    PcaOptions opt;
    opt.window = ctx.cfg.window_length();
    opt.stride = ctx.cfg.stride;
    opt.components = static_cast<Eigen::Index>(ctx.cfg.d);
    opt.threads = ctx.cfg.threads;
    if (ctx.cfg.dump_models) {
        fs::create_directories(ctx.out / "models");
        opt.model_sink = [&](std::size_t i, const PcaModel& m) {
            write_pca_model(m, r.tickers, ctx.out / "models" / window_file(i, "csv"));
        };
    }
    const auto results = run_pca_stress(r, ctx.cfg.stress_spec(), portfolio, opt);
    write_window_results(results, ctx.out / "window_results.csv");
    write_sector_shifts(results, ctx.out / "sector_shifts.csv");
    record_windows(ctx, results, {});
    maybe_attribution(ctx, r, PipelineKind::Pca, portfolio);
    ctx.log << "pca: " << results.size() << " windows\n";
}

void run_ae(RunContext& ctx) {
    const auto r = load_returns(ctx);
    const auto portfolio = make_portfolio(ctx.cfg, r.cols());
    AeOptions opt;
    opt.window = ctx.cfg.window_length();
    opt.stride = ctx.cfg.stride;
    opt.threads = ctx.cfg.threads;
    opt.train = ctx.cfg.train_config();
    if (ctx.cfg.dump_models) {
        fs::create_directories(ctx.out / "models");
        opt.model_sink = [&](std::size_t i, const nn::AeModel& m) {
            const std::array<nn::MlpParams, 2> nets{m.encoder, m.decoder};
            nn::write_networks(ctx.out / "models" / window_file(i, "slnn"), nets);
        };
    }
    const auto run = run_ae_stress(r, ctx.cfg.stress_spec(), portfolio, opt);
    write_window_results(run.results, ctx.out / "window_results.csv");
    write_sector_shifts(run.results, ctx.out / "sector_shifts.csv");
    record_windows(ctx, run.results, run.failures);
    maybe_attribution(ctx, r, PipelineKind::Ae, portfolio);
    ctx.log << "ae: " << run.results.size() << " windows, " << run.failures.size() << " skipped\n";
}

void run_vae(RunContext& ctx) {
    const auto r = load_returns(ctx);
    const auto portfolio = make_portfolio(ctx.cfg, r.cols());
    VaeOptions opt;
    opt.window = ctx.cfg.window_length();
    opt.stride = ctx.cfg.stride;
    opt.threads = ctx.cfg.threads;
    opt.samples = ctx.cfg.samples;
    opt.bins = ctx.cfg.bins;
    opt.kl_weight = ctx.cfg.kl_weight;
    opt.mc_seed = ctx.cfg.seed;
    opt.train = ctx.cfg.train_config();
    if (ctx.cfg.dump_models) {
        fs::create_directories(ctx.out / "models");
        opt.model_sink = [&](std::size_t i, const nn::VaeModel& m) {
            const std::array<nn::MlpParams, 4> nets{m.trunk, m.mu_head, m.logvar_head, m.decoder};
            nn::write_networks(ctx.out / "models" / window_file(i, "slnn"), nets);
        };
    }
    const auto run = run_vae_mc(r, portfolio, opt);
    write_mc_samples(run.results, ctx.out / "mc_samples.csv");
    write_mc_hist(run.results, ctx.out / "mc_hist.csv");
    write_mc_summary(run.results, ctx.out / "mc_summary.csv");
    record_windows(ctx, run.results, run.failures);
    ctx.log << "vae: " << run.results.size() << " windows, " << run.failures.size() << " skipped\n";
}

}  // namespace

RunSummary run(const RunConfig& cfg, std::ostream& log) {
    RunContext ctx{cfg, log, cfg.output_dir(), {}, json::array()};
    const std::string started = utc_timestamp();
    ctx.summary.output_dir = ctx.out;

    switch (cfg.pipeline) {
        case Pipeline::Synth: run_synth(ctx); break;
        case Pipeline::Eda: run_eda(ctx); break;
        case Pipeline::Pca: run_pca(ctx); break;
        case Pipeline::Ae: run_ae(ctx); break;
        case Pipeline::Vae: run_vae(ctx); break;
    }

    ctx.summary.files = list_files(ctx.out);
    json files = json::array();
    for (const auto& f : ctx.summary.files) {
        files.push_back({{"path", f.generic_string()},
                         {"sha256", sha256_file(ctx.out / f)},
                         {"bytes", fs::file_size(ctx.out / f)}});
    }
    json windows = json::array();
    for (const auto& w : ctx.summary.windows) {
        json e{{"window", w.window}, {"start_date", w.first_date}, {"end_date", w.last_date}, {"status", w.status}};
        if (!w.reason.empty()) e["reason"] = w.reason;
        windows.push_back(std::move(e));
    }

    json manifest;
    manifest["artifact"] = "stresslab";
    manifest["version"] = kArtifactVersion;
    manifest["config"] = config_snapshot(cfg);
    manifest["inputs"] = ctx.inputs;
    manifest["timestamps"] = {{"started", started}, {"finished", utc_timestamp()}};
    manifest["windows"] = windows;
    manifest["notes"] = ctx.summary.notes;
    manifest["files"] = files;

    std::ofstream out(ctx.out / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest.json in " + ctx.out.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed on manifest.json");
    return ctx.summary;
}

ManifestCheck verify_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("no manifest.json in " + dir.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    ManifestCheck check;
    std::set<std::string> listed;
    for (const auto& f : j.at("files")) {
        const auto rel = f.at("path").get<std::string>();
        listed.insert(rel);
        ++check.files_checked;
        if (!fs::exists(dir / rel)) {
            check.missing.push_back(rel);
        } else if (sha256_file(dir / rel) != f.at("sha256").get<std::string>()) {
            check.mismatched.push_back(rel);
        }
    }
    for (const auto& f : list_files(dir)) {
        if (!listed.count(f.generic_string())) check.unlisted.push_back(f.generic_string());
    }
    return check;
}

void print_report(const fs::path& dir, std::ostream& out) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no manifest.json in " + dir.string());
    const auto j = json::parse(in);
    out << "stresslab " << j.value("version", "?") << "  pipeline: " << j["config"].value("pipeline", "?") << "\n";
    out << "started " << j["timestamps"].value("started", "?") << "\n";
    std::size_t ok = 0, failed = 0;
    for (const auto& w : j["windows"]) (w.value("status", "") == "ok" ? ok : failed) += 1;
    out << "windows: " << ok << " ok, " << failed << " failed\n";

    const auto check = verify_manifest(dir);
    out << "files: " << check.files_checked << " listed";
    if (check.ok()) out << ", all digests match\n";
    else out << ", " << check.mismatched.size() << " changed, " << check.missing.size() << " missing, "
             << check.unlisted.size() << " unlisted\n";

    const fs::path results = dir / "window_results.csv";
    if (fs::exists(results)) {
        std::ifstream rin(results);
        std::string line;
        std::getline(rin, line);
        const auto header = csv::split_line(line);
        const auto col = [&](std::string_view name) {
            return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
        };
        const std::array<std::string_view, 3> names{"d_var", "d_es", "d_dd"};
        std::array<double, 3> sum{}, mx{-1e300, -1e300, -1e300};
        std::size_t n = 0;
        while (std::getline(rin, line)) {
            const auto f = csv::split_line(line);
            for (std::size_t k = 0; k < 3; ++k) {
                const double v = csv::parse_double(f.at(col(names[k])), results.string());
                sum[k] += v;
                mx[k] = std::max(mx[k], v);
            }
            ++n;
        }
        for (std::size_t k = 0; k < 3 && n > 0; ++k) {
            out << names[k] << ": mean " << csv::format_double(sum[k] / static_cast<double>(n)) << ", max "
                << csv::format_double(mx[k]) << "\n";
        }
    }
    if (!check.ok()) throw DataError("manifest verification failed for " + dir.string());
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 4;
    if (dynamic_cast<const NumericalError*>(&e)) return 5;
    return 1;
}

}  // namespace stresslab
