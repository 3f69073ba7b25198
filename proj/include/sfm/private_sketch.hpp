#pragma once

#include <cstdint>
#include <utility>

#include "sfm/error.hpp"
#include "sfm/mechanism.hpp"
#include "sfm/random.hpp"
#include "sfm/sketch.hpp"

namespace sfm {

/// A privatized sketch: the noisy bit matrix together with the flip
/// channel it went through and how many merges led to it.
class PrivateSketch {
public:
    PrivateSketch(SketchParams params, BitMatrix bits, FlipMechanism mech,
                  uint32_t merge_count = 0)
        : params_(params), bits_(std::move(bits)), mech_(mech), merge_count_(merge_count) {
        params_.validate();
        if (bits_.bit_count() != params_.bit_count()) {
            throw DomainError("bit matrix does not match sketch params");
        }
        if (mech_.is_private() && !validate_dp(mech_.p, mech_.q, mech_.epsilon)) {
            throw MechanismError("private sketch: mechanism fails the DP constraint");
        }
    }

    const SketchParams& params() const { return params_; }
    const BitMatrix& bits() const { return bits_; }
    const FlipMechanism& mechanism() const { return mech_; }
    uint32_t merge_count() const { return merge_count_; }

    bool bit(uint32_t bucket, uint32_t level) const {
        return bits_.test(static_cast<uint64_t>(bucket) * params_.levels + (level - 1));
    }

    uint64_t popcount() const { return bits_.popcount(); }

    friend bool operator==(const PrivateSketch&, const PrivateSketch&) = default;

private:
    SketchParams params_;
    BitMatrix bits_;
    FlipMechanism mech_;
    uint32_t merge_count_;
};

/// Pass every bit of a plain sketch through the flip channel
/// independently. The input sketch is left untouched.
inline PrivateSketch privatize(const PcsaSketch& sketch, const FlipMechanism& mech,
                               RandomSource& rng) {
    if (mech.is_private() && !validate_dp(mech.p, mech.q, mech.epsilon)) {
        throw MechanismError("privatize: mechanism fails the DP constraint");
    }
    const uint64_t n = sketch.params().bit_count();
    BitMatrix noisy(n);
    if (!mech.is_private()) {
        noisy = sketch.bits();
    } else {
        for (uint64_t i = 0; i < n; ++i) {
            noisy.assign(i, rng.bernoulli(sketch.bits().test(i) ? mech.p : mech.q));
        }
    }
    return PrivateSketch(sketch.params(), std::move(noisy), mech, 0);
}

} // namespace sfm
