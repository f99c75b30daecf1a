#pragma once

#include <cstdint>
#include <random>

namespace avqoe {

/// Independent generator for (seed, index); used wherever a seeded stream
/// must not depend on how many draws another stream consumed.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5e55u};
    return std::mt19937_64(seq);
}

}  // namespace avqoe
