#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pm2::text {

/// 17 significant digits: parses back to the identical double.
std::string format_exact(double v);
/// Shortest representation that round-trips.
std::string format_short(double v);
/// Fixed notation with the given number of decimals.
std::string format_fixed(double v, int decimals);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace pm2::text
