#pragma once

#include <cstdint>
#include <random>

namespace sfm {

namespace detail {

inline constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// splitmix64 output function (Steele, Lea & Flood).
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Random bit source with two modes.
///
/// Seeded mode is a splitmix64 counter stream: draw i of a stream is a pure
/// function of (seed, i), so the sequence is reproducible across runs and
/// platforms, disjoint streams can be derived for parallel work, and any
/// partition of the draws reproduces the sequential output.
///
/// Secure mode pulls from std::random_device on every draw. Privatization of
/// real data must use Secure mode; the privacy guarantee needs noise an
/// observer cannot predict.
class RandomSource {
public:
    enum class Mode { Seeded, Secure };

    static RandomSource seeded(uint64_t seed) { return RandomSource(Mode::Seeded, seed); }

    /// Seeded source for sub-stream `stream` of a master seed.
    static RandomSource seeded_stream(uint64_t seed, uint64_t stream) {
        return seeded(detail::mix64(seed + detail::kGolden * (stream + 1)));
    }

    static RandomSource secure() { return RandomSource(Mode::Secure, 0); }

    Mode mode() const { return mode_; }
    bool is_seeded() const { return mode_ == Mode::Seeded; }

    uint64_t next_u64() {
        if (mode_ == Mode::Seeded) {
            state_ += detail::kGolden;
            return detail::mix64(state_);
        }
        std::random_device rd;
        return (static_cast<uint64_t>(rd()) << 32) ^ rd();
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double prob) {
        if (prob >= 1.0) return true;
        if (prob <= 0.0) return false;
        return next_unit() < prob;
    }

    /// Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // multiply-shift reduction; bias < 2^-64 per draw
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Independent child stream. In Seeded mode derivation is deterministic
    /// in (current state, stream); in Secure mode the child is Secure.
    RandomSource derive(uint64_t stream) const {
        if (mode_ == Mode::Seeded) return seeded_stream(state_, stream);
        return secure();
    }

private:
    RandomSource(Mode mode, uint64_t seed) : mode_(mode), state_(seed) {}

    Mode mode_;
    uint64_t state_;
};

} // namespace sfm
