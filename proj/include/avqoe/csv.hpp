#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace avqoe::csv {

/// Splits one RFC 4180 record (no embedded newlines).
std::vector<std::string> split(std::string_view line);

/// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Shortest round-trip decimal form of a double ("%.17g"-equivalent, trimmed).
std::string format_double(double value);

}  // namespace avqoe::csv
