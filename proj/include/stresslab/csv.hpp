#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace stresslab::csv {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Splits one CSV line on commas. Quoting is not supported; fields are
/// trimmed of surrounding whitespace and a trailing '\r'.
std::vector<std::string> split_line(std::string_view line);

/// Parses a decimal number, throwing DataError with `context` on failure.
double parse_double(std::string_view text, std::string_view context);

/// Row-oriented CSV output with '\n' line endings.
class Writer {
public:
    explicit Writer(const std::filesystem::path& path);

    Writer& field(std::string_view text);
    Writer& field(double value);
    Writer& field(long long value);
    Writer& field(std::size_t value) { return field(static_cast<long long>(value)); }
    Writer& field(int value) { return field(static_cast<long long>(value)); }
    void end_row();

    template <typename... Ts>
    void row(const Ts&... values) {
        (field(values), ...);
        end_row();
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
    bool first_in_row_ = true;
};

}  // namespace stresslab::csv
