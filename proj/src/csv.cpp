#include "stresslab/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "stresslab/error.hpp"

namespace stresslab::csv {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == 0.0) value = 0.0;  // fold -0 into 0
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw Error("format_double: to_chars failed");
    return std::string(buf.data(), end);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        const auto piece = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        out.emplace_back(trim(piece));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view text, std::string_view context) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw DataError("cannot parse number '" + std::string(text) + "' in " + std::string(context));
    }
    return value;
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

Writer& Writer::field(std::string_view text) {
    if (!first_in_row_) out_ << ',';
    out_ << text;
    first_in_row_ = false;
    return *this;
}

Writer& Writer::field(double value) { return field(std::string_view(format_double(value))); }

Writer& Writer::field(long long value) { return field(std::string_view(std::to_string(value))); }

void Writer::end_row() {
    out_ << '\n';
    first_in_row_ = true;
    if (!out_) throw IoError("write failed on " + path_.string());
}

}  // namespace stresslab::csv
