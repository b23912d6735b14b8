#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace booster {

// FNV-1a, 64 bit. Used wherever a digest must be stable across platforms and
// runs (std::hash gives no such guarantee).
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string digest_hex(std::string_view s) { return hex64(fnv1a64(s)); }

}  // namespace booster
