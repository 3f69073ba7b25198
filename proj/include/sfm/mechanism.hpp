#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "sfm/error.hpp"

namespace sfm {

enum class MechanismKind : uint8_t {
    None = 0,    ///< identity channel (p = 1, q = 0, epsilon = +inf)
    Sym = 1,     ///< symmetric randomized response, q = 1 - p
    Xor = 2,     ///< half-flip channel, p = 1/2
    CustomPQ = 3 ///< any validated (p, q) pair
};

inline const char* to_string(MechanismKind k) {
    switch (k) {
        case MechanismKind::None: return "none";
        case MechanismKind::Sym: return "sym";
        case MechanismKind::Xor: return "xor";
        case MechanismKind::CustomPQ: return "custom";
    }
    return "?";
}

/// Relative tolerance for the ratio constraints. The sym and xor
/// constructions sit exactly on the constraint boundary, so comparisons
/// must absorb floating-point rounding of e^eps.
inline constexpr double kDpRatioTolerance = 1e-12;

/// Check that independently flipping each bit of a sensitivity-1 vector
/// with output-1 rates p (input 1) and q (input 0) is epsilon-DP:
/// p, q in (0,1) and max{p/q, (1-q)/(1-p)} <= e^eps.
/// Total predicate; boundary equality is accepted.
inline bool validate_dp(double p, double q, double epsilon) {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) return false;
    if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) return false;
    const double budget = std::exp(epsilon) * (1.0 + kDpRatioTolerance);
    return p / q <= budget && (1.0 - q) / (1.0 - p) <= budget;
}

/// A per-bit flip channel: emit 1 with probability p on input 1 and with
/// probability q on input 0, together with the privacy budget it satisfies.
struct FlipMechanism {
    double p = 1.0;
    double q = 0.0;
    double epsilon = std::numeric_limits<double>::infinity();
    MechanismKind kind = MechanismKind::None;

    bool is_private() const { return kind != MechanismKind::None; }

    friend bool operator==(const FlipMechanism&, const FlipMechanism&) = default;
};

/// Identity channel; the only representation of an infinite budget.
inline FlipMechanism mechanism_none() {
    return FlipMechanism{};
}

/// Symmetric randomized response: p = e^eps / (e^eps + 1), q = 1 - p.
/// Both DP ratio constraints bind with equality.
inline FlipMechanism mechanism_sym(double epsilon) {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) {
        throw InvalidBudgetError("mechanism_sym: epsilon must be positive and finite");
    }
    const double q = 1.0 / (std::exp(epsilon) + 1.0);
    return FlipMechanism{1.0 - q, q, epsilon, MechanismKind::Sym};
}

/// Half-flip channel: p = 1/2, q = 1/(2 e^eps). Set bits become coin
/// flips, which is what makes the deterministic xor merge sound.
inline FlipMechanism mechanism_xor(double epsilon) {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) {
        throw InvalidBudgetError("mechanism_xor: epsilon must be positive and finite");
    }
    return FlipMechanism{0.5, 0.5 * std::exp(-epsilon), epsilon, MechanismKind::Xor};
}

/// Arbitrary (p, q) channel claiming budget eps. Rejected unless
/// q <= 1/2 <= p and the DP ratio constraints hold.
inline FlipMechanism mechanism_custom(double p, double q, double epsilon) {
    if (!(q <= 0.5 && 0.5 <= p)) {
        throw MechanismError("mechanism_custom: requires q <= 1/2 <= p");
    }
    if (!validate_dp(p, q, epsilon)) {
        throw MechanismError("mechanism_custom: (p, q) violates the epsilon-DP constraint");
    }
    return FlipMechanism{p, q, epsilon, MechanismKind::CustomPQ};
}

} // namespace sfm
