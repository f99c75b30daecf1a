#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "avqoe/json_support.hpp"

namespace avqoe {

std::string_view tool_version() noexcept;

/// Hex SHA-256 of an arbitrary byte string.
std::string sha256_hex(std::string_view bytes);

/// Origin stamp carried by every emitted file.
struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;

    /// "# avqoe <version> config=<hash> seed=<seed>"
    std::string header_line() const;
    Json to_json() const;

    /// Parses a line written by header_line(); nullopt if the line is not a header.
    static std::optional<Provenance> parse_header_line(std::string_view line);
    static Provenance from_json(const Json& j);

    bool operator==(const Provenance&) const = default;
};

}  // namespace avqoe
