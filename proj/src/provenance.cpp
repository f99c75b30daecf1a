#include "avqoe/provenance.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cstdio>
#include <memory>
#include <stdexcept>

#ifndef AVQOE_VERSION
#define AVQOE_VERSION "0.0.0"
#endif

namespace avqoe {

std::string_view tool_version() noexcept { return AVQOE_VERSION; }

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        char buf[3];
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string Provenance::header_line() const {
    return "# avqoe " + std::string(tool_version()) + " config=" + config_hash + " seed=" + std::to_string(seed);
}

Json Provenance::to_json() const {
    return Json{{"tool", "avqoe"}, {"version", tool_version()}, {"config_hash", config_hash}, {"seed", seed}};
}

std::optional<Provenance> Provenance::parse_header_line(std::string_view line) {
    constexpr std::string_view prefix = "# avqoe ";
    if (!line.starts_with(prefix)) {
        return std::nullopt;
    }
    const auto cfg = line.find(" config=");
    const auto sd = line.find(" seed=");
    if (cfg == std::string_view::npos || sd == std::string_view::npos || sd < cfg) {
        return std::nullopt;
    }
    Provenance p;
    p.config_hash = std::string(line.substr(cfg + 8, sd - cfg - 8));
    auto seed_text = line.substr(sd + 6);
    while (!seed_text.empty() && (seed_text.back() == '\r' || seed_text.back() == ' ')) {
        seed_text.remove_suffix(1);
    }
    auto [ptr, ec] = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), p.seed);
    if (ec != std::errc{} || ptr != seed_text.data() + seed_text.size()) {
        return std::nullopt;
    }
    return p;
}

Provenance Provenance::from_json(const Json& j) {
    Provenance p;
    p.config_hash = j.value("config_hash", std::string{});
    p.seed = j.value("seed", std::uint64_t{0});
    return p;
}

}  // namespace avqoe
