#include "stresslab/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <string>

#include <toml.hpp>

#include "stresslab/csv.hpp"
#include "stresslab/diagnostics.hpp"
#include "stresslab/error.hpp"

namespace stresslab {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

int parse_int(std::string_view s, std::string_view text) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw DataError("invalid date '" + std::string(text) + "'");
    }
    return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw DataError("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    const int y = parse_int(text.substr(0, 4), text);
    const int m = parse_int(text.substr(5, 2), text);
    const int d = parse_int(text.substr(8, 2), text);
    const Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

std::string format_date(Date date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

SectorIndex index_sectors(const std::vector<std::string>& tickers, const SectorMap& sectors) {
    SectorIndex idx;
    for (std::size_t n = 0; n < tickers.size(); ++n) {
        const auto it = sectors.find(tickers[n]);
        if (it == sectors.end()) throw DataError("ticker '" + tickers[n] + "' has no sector");
        auto pos = std::find(idx.labels.begin(), idx.labels.end(), it->second);
        if (pos == idx.labels.end()) {
            idx.labels.push_back(it->second);
            idx.members.emplace_back();
            pos = idx.labels.end() - 1;
        }
        idx.members[static_cast<std::size_t>(pos - idx.labels.begin())].push_back(n);
    }
    return idx;
}

SectorMap read_sector_map(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty sector map");
    const auto header = csv::split_line(line);
    if (header.size() != 2 || header[0] != "ticker" || header[1] != "sector") {
        throw DataError(path.string() + ": sector map header must be 'ticker,sector'");
    }
    SectorMap map;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = csv::split_line(line);
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'ticker,sector'");
        }
        if (!map.emplace(f[0], f[1]).second) {
            throw DataError(path.string() + ": duplicate ticker '" + f[0] + "'");
        }
    }
    return map;
}

PriceTable read_price_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty price file");
    const auto header = csv::split_line(line);
    if (header.size() < 2 || header[0] != "date") {
        throw DataError(path.string() + ": header must be 'date,<TICKER>,...'");
    }
    PriceTable table;
    table.tickers.assign(header.begin() + 1, header.end());
    if (std::set<std::string>(table.tickers.begin(), table.tickers.end()).size() != table.tickers.size()) {
        throw DataError(path.string() + ": duplicate ticker in header");
    }
    for (const auto& t : table.tickers) {
        if (t.empty()) throw DataError(path.string() + ": empty ticker name in header");
    }

    const std::size_t n = table.tickers.size();
    std::vector<double> cells;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = csv::split_line(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != n + 1) {
            throw DataError(where + ": expected " + std::to_string(n + 1) + " fields, got " + std::to_string(f.size()));
        }
        const Date date = parse_date(f[0]);
        if (!table.dates.empty() && !(table.dates.back() < date)) {
            throw DataError(where + ": dates must be strictly increasing");
        }
        table.dates.push_back(date);
        for (std::size_t j = 0; j < n; ++j) {
            cells.push_back(f[j + 1].empty() ? kMissing : csv::parse_double(f[j + 1], where));
        }
    }
    if (table.dates.empty()) throw DataError(path.string() + ": no data rows");

    table.prices.resize(static_cast<Eigen::Index>(table.dates.size()), static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < table.dates.size(); ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            table.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = cells[t * n + j];
        }
    }
    return table;
}

PriceTable clean_prices(PriceTable table) {
    const Eigen::Index rows = table.prices.rows();
    const Eigen::Index cols = table.prices.cols();
    if (static_cast<std::size_t>(cols) != table.tickers.size() || static_cast<std::size_t>(rows) != table.dates.size()) {
        throw DimensionError("price matrix shape does not match dates/tickers");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
        if (table.prices.col(j).array().isNaN().all()) {
            throw DataError("column '" + table.tickers[static_cast<std::size_t>(j)] + "' is entirely missing");
        }
    }

    Eigen::Index first = 0;
    while (first < rows && table.prices.row(first).array().isNaN().any()) ++first;
    if (first == rows) throw DataError("no complete row in price table");

    if (first > 0) {
        Matrix kept = table.prices.bottomRows(rows - first);
        table.prices = std::move(kept);
        table.dates.erase(table.dates.begin(), table.dates.begin() + first);
    }

    for (Eigen::Index t = 1; t < table.prices.rows(); ++t) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (std::isnan(table.prices(t, j))) table.prices(t, j) = table.prices(t - 1, j);
        }
    }
    for (Eigen::Index t = 0; t < table.prices.rows(); ++t) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double p = table.prices(t, j);
            if (!std::isfinite(p) || p <= 0.0) {
                throw DataError("non-positive or non-finite price for '" + table.tickers[static_cast<std::size_t>(j)] +
                                "' on " + format_date(table.dates[static_cast<std::size_t>(t)]));
            }
        }
    }
    return table;
}

PriceTable attach_sectors(PriceTable table, const SectorMap& sectors) {
    SectorMap attached;
    for (const auto& t : table.tickers) {
        const auto it = sectors.find(t);
        if (it == sectors.end()) throw DataError("ticker '" + t + "' has no sector");
        attached.emplace(t, it->second);
    }
    table.sectors = std::move(attached);
    return table;
}

PriceTable ingest_prices(const std::filesystem::path& path, const std::filesystem::path& sector_map_path) {
    return clean_prices(attach_sectors(read_price_csv(path), read_sector_map(sector_map_path)));
}

void write_price_csv(const PriceTable& table, const std::filesystem::path& path) {
    csv::Writer w(path);
    w.field("date");
    for (const auto& t : table.tickers) w.field(t);
    w.end_row();
    for (std::size_t t = 0; t < table.rows(); ++t) {
        w.field(format_date(table.dates[t]));
        for (std::size_t j = 0; j < table.cols(); ++j) {
            const double p = table.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
            if (std::isnan(p)) w.field(std::string_view{});
            else w.field(p);
        }
        w.end_row();
    }
}

void write_sector_csv(const PriceTable& table, const std::filesystem::path& path) {
    csv::Writer w(path);
    w.row(std::string_view("ticker"), std::string_view("sector"));
    for (const auto& t : table.tickers) w.row(std::string_view(t), std::string_view(table.sectors.at(t)));
}

ReturnMatrix compute_returns(const PriceTable& p) {
    if (p.rows() < 2) throw DataError("compute_returns needs at least 2 price rows");
    const Eigen::Index t = p.prices.rows();
    ReturnMatrix r;
    r.dates.assign(p.dates.begin() + 1, p.dates.end());
    r.tickers = p.tickers;
    r.sectors = p.sectors;
    r.values = (p.prices.bottomRows(t - 1).array() / p.prices.topRows(t - 1).array() - 1.0).matrix();
    return r;
}

Standardizer fit_standardizer(const WindowView& window) {
    const Eigen::Index w = window.data.rows();
    if (w < 2) throw DataError("fit_standardizer needs at least 2 rows");
    Standardizer s;
    s.means = window.data.colwise().mean().transpose();
    const Matrix centered = window.data.rowwise() - s.means.transpose();
    s.stds = (centered.colwise().squaredNorm() / static_cast<double>(w - 1)).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < s.stds.size(); ++j) {
        if (!(s.stds(j) > 0.0)) {
            const auto ju = static_cast<std::size_t>(j);
            const std::string name = ju < window.tickers.size() ? window.tickers[ju] : "column " + std::to_string(ju);
            throw NumericalError("degenerate column '" + name + "': zero variance in window " +
                                 std::to_string(window.index));
        }
    }
    return s;
}

Matrix standardize(const Matrix& x, const Standardizer& s) {
    if (x.cols() != s.means.size()) throw DimensionError("standardize: column count mismatch");
    return ((x.rowwise() - s.means.transpose()).array().rowwise() / s.stds.transpose().array()).matrix();
}

Matrix destandardize(const Matrix& z, const Standardizer& s) {
    if (z.cols() != s.means.size()) throw DimensionError("destandardize: column count mismatch");
    return ((z.array().rowwise() * s.stds.transpose().array()).rowwise() + s.means.transpose().array()).matrix();
}

WindowView make_window(const ReturnMatrix& r, std::size_t index, std::size_t start, std::size_t length) {
    if (length < 2) throw DataError("window length must be at least 2");
    if (start + length > r.rows()) throw DataError("window exceeds return matrix bounds");
    WindowView v;
    v.index = index;
    v.start = start;
    v.length = length;
    v.data = r.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(length));
    v.tickers = r.tickers;
    return v;
}

std::vector<std::size_t> window_starts(std::size_t rows, std::size_t window, std::size_t stride) {
    if (stride == 0) throw DataError("stride must be at least 1");
    if (window > rows) {
        throw DataError("window length " + std::to_string(window) + " exceeds " + std::to_string(rows) + " rows");
    }
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + window <= rows; s += stride) starts.push_back(s);
    if (starts.back() + window < rows) starts.push_back(rows - window);
    return starts;
}

std::vector<WindowView> rolling_windows(const ReturnMatrix& r, std::size_t window, std::size_t stride) {
    const auto starts = window_starts(r.rows(), window, stride);
    std::vector<WindowView> out;
    out.reserve(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) out.push_back(make_window(r, i, starts[i], window));
    return out;
}

Matrix random_loadings(std::size_t assets, std::size_t factors, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> market(0.5, 1.5);
    std::uniform_real_distribution<double> other(-0.5, 0.5);
    Matrix b(static_cast<Eigen::Index>(assets), static_cast<Eigen::Index>(factors));
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index f = 0; f < b.cols(); ++f) b(i, f) = f == 0 ? market(rng) : other(rng);
    }
    return b;
}

void validate(const SynthSpec& spec) {
    if (spec.assets == 0 || spec.sectors == 0 || spec.sectors > spec.assets) {
        throw ConfigError("synthetic spec needs 1 <= sectors <= assets");
    }
    if (spec.days < 2) throw ConfigError("synthetic spec needs at least 2 days");
    if (static_cast<std::size_t>(spec.loadings.rows()) != spec.assets) {
        throw ConfigError("loadings must have one row per asset");
    }
    if (spec.loadings.cols() != spec.factor_vols.size()) {
        throw ConfigError("factor_vol must have one entry per loading column");
    }
    if (!spec.loadings.allFinite() || !spec.factor_vols.allFinite() || (spec.factor_vols.array() < 0.0).any()) {
        throw ConfigError("loadings and factor volatilities must be finite, volatilities non-negative");
    }
    const auto& g = spec.garch;
    if (!(g.omega >= 0.0) || !(g.alpha >= 0.0) || !(g.beta >= 0.0) || !(g.alpha + g.beta < 1.0)) {
        throw ConfigError("invalid GARCH parameters: need omega >= 0, alpha >= 0, beta >= 0, alpha + beta < 1");
    }
}

PriceTable generate_synthetic(const SynthSpec& spec) {
    validate(spec);
    const auto n = static_cast<Eigen::Index>(spec.assets);
    const auto days = static_cast<Eigen::Index>(spec.days);
    const auto f = spec.loadings.cols();

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix factors(days - 1, f);
    for (Eigen::Index t = 0; t < days - 1; ++t) {
        for (Eigen::Index k = 0; k < f; ++k) factors(t, k) = spec.factor_vols(k) * normal(rng);
    }
    Matrix returns = factors * spec.loadings.transpose();

    if (spec.garch.omega > 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::uint64_t asset_seed = spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i) + 1;
            const auto noise = garch_simulate(spec.garch, static_cast<std::size_t>(days - 1), asset_seed);
            returns.col(i) += Eigen::Map<const Vector>(noise.data(), days - 1);
        }
    }

    PriceTable table;
    table.prices.resize(days, n);
    table.prices.row(0).setConstant(100.0);
    for (Eigen::Index t = 1; t < days; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = returns(t - 1, i);
            if (!(r > -1.0)) throw NumericalError("synthetic return <= -1; reduce volatilities");
            table.prices(t, i) = table.prices(t - 1, i) * (1.0 + r);
        }
    }

    using namespace std::chrono;
    sys_days day = sys_days{year{2004} / January / 1};
    while (table.dates.size() < spec.days) {
        const weekday wd{day};
        if (wd != Saturday && wd != Sunday) table.dates.emplace_back(day);
        day += std::chrono::days{1};
    }

    const int width = spec.assets >= 100 ? 3 : 2;
    for (std::size_t i = 0; i < spec.assets; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "A%0*zu", width, i);
        const std::size_t sector = i * spec.sectors / spec.assets;
        table.tickers.emplace_back(name);
        table.sectors.emplace(name, "S" + std::to_string(sector));
    }
    return table;
}

namespace {

double toml_number(const toml::node& node, const std::string& key) {
    if (auto v = node.value<double>()) return *v;
    throw ConfigError("synthetic spec: '" + key + "' must be a number");
}

std::size_t toml_count(const toml::table& tbl, const std::string& key, std::size_t fallback) {
    const auto* node = tbl.get(key);
    if (!node) return fallback;
    const auto v = node->value<std::int64_t>();
    if (!v || *v < 0 || !node->is_integer()) throw ConfigError("synthetic spec: '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(*v);
}

}  // namespace

SynthSpec read_synth_spec(const std::filesystem::path& path) {
    toml::table tbl;
    try {
        tbl = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw ConfigError(path.string() + ": " + std::string(e.description()));
    }

    static const std::set<std::string> known{"assets", "sectors", "days", "seed", "garch", "loadings", "factors", "factor_vol"};
    for (const auto& [k, v] : tbl) {
        if (!known.count(std::string(k.str()))) throw ConfigError("synthetic spec: unknown key '" + std::string(k.str()) + "'");
    }

    SynthSpec spec;
    spec.assets = toml_count(tbl, "assets", spec.assets);
    spec.sectors = toml_count(tbl, "sectors", spec.sectors);
    spec.days = toml_count(tbl, "days", spec.days);
    spec.seed = toml_count(tbl, "seed", spec.seed);
    std::size_t factors = toml_count(tbl, "factors", 1);

    if (const auto* g = tbl.get("garch")) {
        const auto* gt = g->as_table();
        if (!gt) throw ConfigError("synthetic spec: 'garch' must be a table {omega, alpha, beta}");
        for (const auto& [k, v] : *gt) {
            const std::string key(k.str());
            if (key == "omega") spec.garch.omega = toml_number(v, key);
            else if (key == "alpha") spec.garch.alpha = toml_number(v, key);
            else if (key == "beta") spec.garch.beta = toml_number(v, key);
            else throw ConfigError("synthetic spec: unknown garch key '" + key + "'");
        }
    }

    const auto* load = tbl.get("loadings");
    if (!load || (load->is_string() && *load->value<std::string>() == "random")) {
        if (factors == 0) throw ConfigError("synthetic spec: 'factors' must be at least 1");
        spec.loadings = random_loadings(spec.assets, factors, spec.seed ^ 0xA5A5A5A5ULL);
    } else if (const auto* arr = load->as_array()) {
        if (arr->size() != spec.assets) throw ConfigError("synthetic spec: 'loadings' needs one row per asset");
        std::size_t cols = 0;
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const auto* row = (*arr)[i].as_array();
            if (!row || row->empty()) throw ConfigError("synthetic spec: 'loadings' rows must be non-empty arrays");
            if (i == 0) {
                cols = row->size();
                spec.loadings.resize(static_cast<Eigen::Index>(spec.assets), static_cast<Eigen::Index>(cols));
            } else if (row->size() != cols) {
                throw ConfigError("synthetic spec: 'loadings' rows must have equal length");
            }
            for (std::size_t j = 0; j < cols; ++j) {
                spec.loadings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = toml_number((*row)[j], "loadings");
            }
        }
        factors = cols;
    } else {
        throw ConfigError("synthetic spec: 'loadings' must be \"random\" or an inline matrix");
    }

    spec.factor_vols = Vector::Constant(static_cast<Eigen::Index>(factors), 0.01);
    if (const auto* fv = tbl.get("factor_vol")) {
        if (const auto* arr = fv->as_array()) {
            if (arr->size() != factors) throw ConfigError("synthetic spec: 'factor_vol' needs one entry per factor");
            for (std::size_t j = 0; j < factors; ++j) spec.factor_vols(static_cast<Eigen::Index>(j)) = toml_number((*arr)[j], "factor_vol");
        } else {
            spec.factor_vols.setConstant(toml_number(*fv, "factor_vol"));
        }
    }
    validate(spec);
    return spec;
}

}  // namespace stresslab
