#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qqeval {

// 64-bit FNV-1a. Used for cache keys, prompt fingerprints, and the mock
// provider's keyed expansion. Not cryptographic.
constexpr std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);

std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

// True if `needle` occurs in `haystack`.
bool contains(std::string_view haystack, std::string_view needle);

// Fixed non-locale formatting for doubles written to files ("%.17g" style
// round-trippable when full=true, "%.2f" style otherwise).
std::string format_double(double v, int decimals);
std::string format_double_full(double v);

std::string read_text_file(const std::string& path);          // throws IoError
void write_text_file(const std::string& path, std::string_view content);  // throws IoError

// Minimal CSV (RFC-4180 flavored, single-line records): quotes a field when
// it holds a comma, quote, or newline; doubles embedded quotes.
std::string csv_escape(std::string_view field);
std::vector<std::string> parse_csv_line(std::string_view line);

}  // namespace qqeval
