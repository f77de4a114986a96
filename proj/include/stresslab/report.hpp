#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stresslab/config.hpp"
#include "stresslab/pipelines.hpp"

namespace stresslab {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct WindowStatus {
    std::size_t window = 0;
    std::string first_date;
    std::string last_date;
    std::string status;  // "ok" or "failed"
    std::string reason;
};

struct RunSummary {
    std::filesystem::path output_dir;
    std::vector<std::filesystem::path> files;  // relative to output_dir, manifest excluded
    std::vector<WindowStatus> windows;
    std::vector<std::string> notes;
};

/// Executes the configured pipeline end to end and writes its CSVs plus
/// manifest.json into cfg.output_dir(). Progress goes to `log`.
RunSummary run(const RunConfig& cfg, std::ostream& log);

// Individual writers, exposed for tests.
void write_window_results(const std::vector<WindowResult>& results, const std::filesystem::path& path);
void write_sector_shifts(const std::vector<WindowResult>& results, const std::filesystem::path& path);
void write_attribution(const std::vector<AttributionRow>& rows, const std::filesystem::path& path);
void write_mc_samples(const std::vector<McResult>& results, const std::filesystem::path& path);
void write_mc_hist(const std::vector<McResult>& results, const std::filesystem::path& path);
void write_mc_summary(const std::vector<McResult>& results, const std::filesystem::path& path);

struct ManifestCheck {
    std::size_t files_checked = 0;
    std::vector<std::string> mismatched;
    std::vector<std::string> missing;
    std::vector<std::string> unlisted;

    bool ok() const { return mismatched.empty() && missing.empty() && unlisted.empty(); }
};

/// Re-hashes every file listed in <dir>/manifest.json and looks for files
/// present in the directory but absent from the manifest.
ManifestCheck verify_manifest(const std::filesystem::path& dir);

/// Prints a human-readable digest of an output directory (the `report`
/// subcommand).
void print_report(const std::filesystem::path& dir, std::ostream& out);

/// Maps an exception to the CLI exit code: 2 config, 3 data, 4 I/O,
/// 5 numerical, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace stresslab
