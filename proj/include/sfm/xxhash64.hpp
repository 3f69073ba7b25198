#pragma once

// Compact implementation of the XXH64 hash (Yann Collet's xxHash, 64-bit
// variant). Produces bit-identical output to the reference implementation;
// verified against reference digests in the test suite.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace sfm {

namespace detail {

inline constexpr uint64_t kXxhPrime1 = 0x9E3779B185EBCA87ULL;
inline constexpr uint64_t kXxhPrime2 = 0xC2B2AE3D27D4EB4FULL;
inline constexpr uint64_t kXxhPrime3 = 0x165667B19E3779F9ULL;
inline constexpr uint64_t kXxhPrime4 = 0x85EBCA77C2B2AE63ULL;
inline constexpr uint64_t kXxhPrime5 = 0x27D4EB2F165667C5ULL;

inline uint64_t xxh_read64(const unsigned char* p) {
    if constexpr (std::endian::native == std::endian::little) {
        uint64_t v;
        std::memcpy(&v, p, 8);
        return v;
    } else {
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
}

inline uint32_t xxh_read32(const unsigned char* p) {
    if constexpr (std::endian::native == std::endian::little) {
        uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
    } else {
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }
}

inline uint64_t xxh_round(uint64_t acc, uint64_t input) {
    acc += input * kXxhPrime2;
    acc = std::rotl(acc, 31);
    acc *= kXxhPrime1;
    return acc;
}

inline uint64_t xxh_merge_round(uint64_t acc, uint64_t val) {
    acc ^= xxh_round(0, val);
    acc = acc * kXxhPrime1 + kXxhPrime4;
    return acc;
}

} // namespace detail

/// XXH64 of an arbitrary byte buffer.
inline uint64_t xxhash64(const void* data, size_t len, uint64_t seed) {
    using namespace detail;
    const auto* p = static_cast<const unsigned char*>(data);
    const unsigned char* const end = p + len;
    uint64_t h;

    if (len >= 32) {
        const unsigned char* const limit = end - 32;
        uint64_t v1 = seed + kXxhPrime1 + kXxhPrime2;
        uint64_t v2 = seed + kXxhPrime2;
        uint64_t v3 = seed;
        uint64_t v4 = seed - kXxhPrime1;
        do {
            v1 = xxh_round(v1, xxh_read64(p));
            v2 = xxh_round(v2, xxh_read64(p + 8));
            v3 = xxh_round(v3, xxh_read64(p + 16));
            v4 = xxh_round(v4, xxh_read64(p + 24));
            p += 32;
        } while (p <= limit);
        h = std::rotl(v1, 1) + std::rotl(v2, 7) + std::rotl(v3, 12) + std::rotl(v4, 18);
        h = xxh_merge_round(h, v1);
        h = xxh_merge_round(h, v2);
        h = xxh_merge_round(h, v3);
        h = xxh_merge_round(h, v4);
    } else {
        h = seed + kXxhPrime5;
    }

    h += static_cast<uint64_t>(len);

    while (p + 8 <= end) {
        h ^= xxh_round(0, xxh_read64(p));
        h = std::rotl(h, 27) * kXxhPrime1 + kXxhPrime4;
        p += 8;
    }
    if (p + 4 <= end) {
        h ^= static_cast<uint64_t>(xxh_read32(p)) * kXxhPrime1;
        h = std::rotl(h, 23) * kXxhPrime2 + kXxhPrime3;
        p += 4;
    }
    while (p < end) {
        h ^= static_cast<uint64_t>(*p) * kXxhPrime5;
        h = std::rotl(h, 11) * kXxhPrime1;
        ++p;
    }

    h ^= h >> 33;
    h *= kXxhPrime2;
    h ^= h >> 29;
    h *= kXxhPrime3;
    h ^= h >> 32;
    return h;
}

inline uint64_t xxhash64(std::string_view data, uint64_t seed) {
    return xxhash64(data.data(), data.size(), seed);
}

} // namespace sfm
