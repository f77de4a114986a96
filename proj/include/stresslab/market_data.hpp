#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stresslab/types.hpp"

namespace stresslab {

using SectorMap = std::map<std::string, std::string>;

/// Closing-price panel. Rows are trading dates, columns are tickers.
/// Missing cells are NaN until the table has been cleaned.
struct PriceTable {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    SectorMap sectors;
    Matrix prices;

    std::size_t rows() const { return dates.size(); }
    std::size_t cols() const { return tickers.size(); }
};

/// Daily simple returns. values(t, n) is the return realised on dates[t].
struct ReturnMatrix {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    SectorMap sectors;
    Matrix values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

/// Sector labels in first-appearance order of the ticker list, with the
/// column indices belonging to each.
struct SectorIndex {
    std::vector<std::string> labels;
    std::vector<std::vector<std::size_t>> members;
};

SectorIndex index_sectors(const std::vector<std::string>& tickers, const SectorMap& sectors);

/// Column-wise mean/std fitted on one window.
struct Standardizer {
    Vector means;
    Vector stds;
};

/// A contiguous block of rows of a ReturnMatrix.
struct WindowView {
    std::size_t index = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    Matrix data;
    std::vector<std::string> tickers;
};

struct SynthSpec {
    std::size_t assets = 25;
    std::size_t sectors = 5;
    std::size_t days = 2000;
    Matrix loadings;        // assets x factors
    Vector factor_vols;     // one per factor, daily return units
    GarchParams garch{2e-6, 0.08, 0.90};
    std::uint64_t seed = 42;
};

// Loading and cleaning.

SectorMap read_sector_map(const std::filesystem::path& path);

/// Parses a price CSV without cleaning (missing cells stay NaN).
PriceTable read_price_csv(const std::filesystem::path& path);

/// Drops leading rows with any missing value, forward-fills interior gaps,
/// and checks that every remaining price is finite and positive.
PriceTable clean_prices(PriceTable table);

/// read_price_csv + sector attachment + clean_prices.
PriceTable ingest_prices(const std::filesystem::path& path, const std::filesystem::path& sector_map_path);

/// Attaches sectors to a raw table. Throws if a ticker has no sector; sector
/// entries for tickers not in the table are ignored.
PriceTable attach_sectors(PriceTable table, const SectorMap& sectors);

void write_price_csv(const PriceTable& table, const std::filesystem::path& path);
void write_sector_csv(const PriceTable& table, const std::filesystem::path& path);

// Returns and windows.

ReturnMatrix compute_returns(const PriceTable& prices);

Standardizer fit_standardizer(const WindowView& window);
Matrix standardize(const Matrix& x, const Standardizer& s);
Matrix destandardize(const Matrix& z, const Standardizer& s);

WindowView make_window(const ReturnMatrix& r, std::size_t index, std::size_t start, std::size_t length);

/// Windows start at 0, stride, 2*stride, ...; a terminal window ending on
/// the last row is appended when the stride does not land on it.
std::vector<WindowView> rolling_windows(const ReturnMatrix& r, std::size_t window, std::size_t stride);

/// Start rows only, for callers that want to slice lazily.
std::vector<std::size_t> window_starts(std::size_t rows, std::size_t window, std::size_t stride);

// Synthetic markets.

/// Random loadings for `factors` factors: the first is a market factor with
/// loadings uniform in [0.5, 1.5]; the rest are uniform in [-0.5, 0.5].
Matrix random_loadings(std::size_t assets, std::size_t factors, std::uint64_t seed);

void validate(const SynthSpec& spec);

/// Factor model with GARCH(1,1) idiosyncratic noise compounded from a base
/// price of 100. Business-day dates start at 2004-01-01. Asset n belongs to
/// sector floor(n * sectors / assets).
PriceTable generate_synthetic(const SynthSpec& spec);

/// Reads a synthetic-market TOML description.
SynthSpec read_synth_spec(const std::filesystem::path& path);

}  // namespace stresslab
