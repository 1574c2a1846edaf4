#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace rvrecon {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

/// Fixed notation with `digits` decimals, for human-readable tables.
std::string format_fixed(double value, int digits);

/// Strict parses; `context` is prefixed to the DataError message.
double parse_double(std::string_view text, std::string_view context);
std::size_t parse_size(std::string_view text, std::string_view context);

/// Splits one comma-separated line; no quoting support.
std::vector<std::string_view> split_fields(std::string_view line);

/// Removes a trailing '\r' left by CRLF files.
std::string_view chomp(std::string_view line);

} // namespace rvrecon
