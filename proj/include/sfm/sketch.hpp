#pragma once

#include <bit>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sfm/error.hpp"
#include "sfm/random.hpp"
#include "sfm/xxhash64.hpp"

namespace sfm {

/// Shape and hashing parameters of a sketch. Two sketches are
/// merge-compatible iff their params compare equal field-for-field.
struct SketchParams {
    uint32_t buckets = 4096;  ///< B
    uint32_t levels = 24;     ///< P
    uint64_t hash_seed = 0;

    void validate() const {
        if (buckets < 1 || levels < 1) {
            throw DomainError("sketch params: buckets and levels must be >= 1");
        }
        if (static_cast<uint64_t>(buckets) * levels > (uint64_t(1) << 32)) {
            throw DomainError("sketch params: buckets * levels exceeds 2^32");
        }
    }

    uint64_t bit_count() const { return static_cast<uint64_t>(buckets) * levels; }

    friend bool operator==(const SketchParams&, const SketchParams&) = default;
};

/// Flat bit matrix, bucket-major: bit (bucket i, level j) lives at index
/// i*P + (j-1) for 0-based i and 1-based j. Level runs are contiguous per
/// bucket, which keeps merge and likelihood loops linear.
class BitMatrix {
public:
    BitMatrix() = default;

    explicit BitMatrix(uint64_t bits)
        : bit_count_(bits), words_((bits + 63) / 64, 0) {}

    uint64_t bit_count() const { return bit_count_; }

    bool test(uint64_t idx) const {
        return (words_[idx >> 6] >> (idx & 63)) & 1u;
    }

    void set(uint64_t idx) { words_[idx >> 6] |= uint64_t(1) << (idx & 63); }

    void assign(uint64_t idx, bool value) {
        const uint64_t mask = uint64_t(1) << (idx & 63);
        if (value) {
            words_[idx >> 6] |= mask;
        } else {
            words_[idx >> 6] &= ~mask;
        }
    }

    uint64_t popcount() const {
        uint64_t n = 0;
        for (uint64_t w : words_) n += static_cast<uint64_t>(std::popcount(w));
        return n;
    }

    void or_with(const BitMatrix& other) {
        for (size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    }

    void xor_with(const BitMatrix& other) {
        for (size_t i = 0; i < words_.size(); ++i) words_[i] ^= other.words_[i];
    }

    /// Complement every payload bit; tail bits past bit_count stay zero.
    void flip_all() {
        for (auto& w : words_) w = ~w;
        const unsigned tail = bit_count_ & 63;
        if (tail != 0) words_.back() &= (uint64_t(1) << tail) - 1;
    }

    const std::vector<uint64_t>& words() const { return words_; }
    std::vector<uint64_t>& words() { return words_; }

    friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

private:
    uint64_t bit_count_ = 0;
    std::vector<uint64_t> words_;
};

/// Where one item lands: a uniform bucket in [0, B) and a geometric
/// level in [1, P] (level j has probability 2^-j, all residual mass on P).
struct HashedItem {
    uint32_t bucket;  ///< 0-based
    uint32_t value;   ///< 1-based level

    friend bool operator==(const HashedItem&, const HashedItem&) = default;
};

namespace detail {
// Distinct per-purpose seed derivations so the bucket and level hashes
// behave as independent functions of the item.
inline constexpr uint64_t kBucketSeedTag = 0xB5C4E1A96D0F3827ULL;
inline constexpr uint64_t kValueSeedTag = 0x6A09E667F3BCC909ULL;
} // namespace detail

/// Hash an item to its (bucket, level) cell. Deterministic in
/// (item, hash_seed).
inline HashedItem hash_item(std::string_view item, const SketchParams& params) {
    const uint64_t h1 = xxhash64(item, detail::mix64(params.hash_seed ^ detail::kBucketSeedTag));
    const uint64_t h2 = xxhash64(item, detail::mix64(params.hash_seed ^ detail::kValueSeedTag));
    // multiply-shift reduction of h1 onto [0, B)
    const auto bucket = static_cast<uint32_t>(
        (static_cast<unsigned __int128>(h1) * params.buckets) >> 64);
    // leading-zero count realizes the Geometric(1/2) draw, clamped to P
    const auto geometric = static_cast<uint32_t>(std::countl_zero(h2)) + 1;
    const uint32_t value = geometric < params.levels ? geometric : params.levels;
    return HashedItem{bucket, value};
}

/// Plain (non-private) PCSA sketch: a B x P bit matrix where bit (i, j)
/// records that some inserted item hashed to bucket i at level j.
/// Duplicate- and order-insensitive by construction.
class PcsaSketch {
public:
    explicit PcsaSketch(SketchParams params)
        : params_(params), bits_(params.bit_count()) {
        params_.validate();
    }

    PcsaSketch(SketchParams params, BitMatrix bits)
        : params_(params), bits_(std::move(bits)) {
        params_.validate();
        if (bits_.bit_count() != params_.bit_count()) {
            throw DomainError("bit matrix does not match sketch params");
        }
    }

    const SketchParams& params() const { return params_; }
    const BitMatrix& bits() const { return bits_; }

    void insert(std::string_view item) {
        const HashedItem h = hash_item(item, params_);
        bits_.set(bit_index(h.bucket, h.value));
    }

    bool bit(uint32_t bucket, uint32_t level) const {
        return bits_.test(bit_index(bucket, level));
    }

    uint64_t popcount() const { return bits_.popcount(); }

    uint64_t bit_index(uint32_t bucket, uint32_t level) const {
        return static_cast<uint64_t>(bucket) * params_.levels + (level - 1);
    }

    friend bool operator==(const PcsaSketch&, const PcsaSketch&) = default;

private:
    SketchParams params_;
    BitMatrix bits_;
};

/// Lossless union of two compatible sketches (bitwise or). Commutative,
/// associative, and idempotent.
inline PcsaSketch merge_exact(const PcsaSketch& a, const PcsaSketch& b) {
    if (a.params() != b.params()) {
        throw IncompatibleSketchError("merge_exact: sketch params differ");
    }
    BitMatrix bits = a.bits();
    bits.or_with(b.bits());
    return PcsaSketch(a.params(), std::move(bits));
}

} // namespace sfm
