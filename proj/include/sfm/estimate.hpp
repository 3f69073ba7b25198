#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sfm/error.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/sketch.hpp"

namespace sfm {

/// Returned when the likelihood hits a log(0) boundary (an observation
/// impossible under the candidate cardinality).
inline constexpr double kLogLikelihoodFloor = -std::numeric_limits<double>::max();

/// Cardinality cap for the solver's bracket expansion.
inline constexpr double kCardinalityCap = 4611686018427387904.0;  // 2^62

/// Per-level cell-occupancy model. Level j of any bucket captures an item
/// with probability rho_j = 2^{-min(j, P-1)} / B; the per-bucket level
/// probabilities sum to 1/B. gamma_j = 1 - rho_j is the per-item survival
/// probability of a level-j cell.
class LevelProfile {
public:
    LevelProfile(uint32_t buckets, uint32_t levels)
        : buckets_(buckets), rho_(levels), gamma_(levels), log_gamma_(levels) {
        if (buckets < 1 || levels < 1) {
            throw DomainError("level profile: buckets and levels must be >= 1");
        }
        if (buckets == 1 && levels == 1) {
            throw DomainError("level profile: 1x1 sketch has no surviving cells");
        }
        for (uint32_t j = 1; j <= levels; ++j) {
            const double rho =
                std::ldexp(1.0, -static_cast<int>(std::min(j, levels - 1))) / buckets;
            rho_[j - 1] = rho;
            gamma_[j - 1] = 1.0 - rho;
            log_gamma_[j - 1] = std::log1p(-rho);
        }
    }

    uint32_t buckets() const { return buckets_; }
    uint32_t levels() const { return static_cast<uint32_t>(gamma_.size()); }

    double rho(uint32_t level) const { return rho_[level - 1]; }              ///< 1-based
    double gamma(uint32_t level) const { return gamma_[level - 1]; }          ///< 1-based
    double log_gamma(uint32_t level) const { return log_gamma_[level - 1]; }  ///< 1-based

    std::span<const double> gammas() const { return gamma_; }
    std::span<const double> log_gammas() const { return log_gamma_; }

private:
    uint32_t buckets_;
    std::vector<double> rho_;
    std::vector<double> gamma_;
    std::vector<double> log_gamma_;
};

/// Sufficient statistic of a sketch for the composite likelihood: the
/// count of 1-bits at each level across buckets. The marginal bit model
/// is level-constant, so nothing else about the bit matrix matters.
struct BitCounts {
    uint32_t buckets = 0;
    std::vector<uint64_t> ones_per_level;

    uint32_t levels() const { return static_cast<uint32_t>(ones_per_level.size()); }

    static BitCounts from_bits(const BitMatrix& bits, const SketchParams& params) {
        BitCounts counts{params.buckets, std::vector<uint64_t>(params.levels, 0)};
        const auto& words = bits.words();
        for (size_t w = 0; w < words.size(); ++w) {
            uint64_t word = words[w];
            while (word != 0) {
                const int tz = std::countr_zero(word);
                const uint64_t idx = (static_cast<uint64_t>(w) << 6) + tz;
                counts.ones_per_level[idx % params.levels] += 1;
                word &= word - 1;
            }
        }
        return counts;
    }

    static BitCounts from_sketch(const PcsaSketch& s) { return from_bits(s.bits(), s.params()); }
    static BitCounts from_sketch(const PrivateSketch& s) { return from_bits(s.bits(), s.params()); }
};

namespace detail {

/// Neumaier compensated accumulator; the likelihood sums mix magnitudes
/// across levels and feed finite-difference checks at 1e-5.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline void require_pq(double p, double q, const char* where) {
    const bool non_private = (p == 1.0 && q == 0.0);
    if (!non_private && !(p > q && p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
        throw MechanismError(std::string(where) +
                             ": needs p > q with p, q in (0,1), or the non-private pair (1, 0)");
    }
}

/// Terms whose gamma_j^n factor underflows past this are dropped.
inline constexpr double kPowFloor = 1e-300;

} // namespace detail

/// Composite marginal log-likelihood of cardinality n given per-level
/// one-counts under the (p, q) flip channel:
///   sum_j zeros_j * log(1 - p + (p-q) gamma_j^n)
///      + ones_j * log(p - (p-q) gamma_j^n).
/// ones_per_level may be real-valued (expected counts are admissible).
/// Returns kLogLikelihoodFloor when an impossible observation drives a
/// term to log(0).
inline double log_composite_likelihood(double n, const LevelProfile& profile,
                                       std::span<const double> ones_per_level, double p,
                                       double q) {
    detail::require_pq(p, q, "log_composite_likelihood");
    if (!(n >= 0)) throw DomainError("log_composite_likelihood: n must be >= 0");
    const double buckets = profile.buckets();
    const double pq = p - q;
    detail::CompensatedSum total;
    for (uint32_t j = 1; j <= profile.levels(); ++j) {
        const double ones = ones_per_level[j - 1];
        const double zeros = buckets - ones;
        const double nl = n * profile.log_gamma(j);
        // em = gamma^n - 1, exact at n = 0 and safe for tiny n
        const double em = std::expm1(nl);
        double log_zero_prob;  // log Pr(bit = 0)
        if (p == 1.0) {
            log_zero_prob = nl;  // Pr(bit = 0) = gamma^n exactly
        } else {
            log_zero_prob = std::log((1.0 - p) + pq * (1.0 + em));
        }
        const double one_prob = q - pq * em;  // p - (p-q) gamma^n
        const double log_one_prob = std::log(one_prob);
        if (zeros > 0 && !std::isfinite(log_zero_prob)) return kLogLikelihoodFloor;
        if (ones > 0 && !std::isfinite(log_one_prob)) return kLogLikelihoodFloor;
        if (zeros > 0) total.add(zeros * log_zero_prob);
        if (ones > 0) total.add(ones * log_one_prob);
    }
    return total.value();
}

/// First derivative of the composite log-likelihood in n.
inline double score(double n, const LevelProfile& profile,
                    std::span<const double> ones_per_level, double p, double q) {
    detail::require_pq(p, q, "score");
    if (!(n >= 0)) throw DomainError("score: n must be >= 0");
    const double buckets = profile.buckets();
    const double pq = p - q;
    detail::CompensatedSum total;
    for (uint32_t j = 1; j <= profile.levels(); ++j) {
        const double lg = profile.log_gamma(j);
        const double g = std::exp(n * lg);
        const double ones = ones_per_level[j - 1];
        const double zeros = buckets - ones;
        if (p == 1.0) {
            // the gamma^n factor cancels against Pr(bit = 0) = gamma^n,
            // so the zero-bit term survives arbitrary n
            if (zeros > 0) total.add(zeros * lg);
            if (ones > 0 && g >= detail::kPowFloor) {
                total.add(ones * g * lg / std::expm1(n * lg));
            }
            continue;
        }
        if (g < detail::kPowFloor) continue;
        const double zero_prob = (1.0 - p) + pq * g;
        const double one_prob = q - pq * std::expm1(n * lg);
        const double w = pq * g * lg;
        if (zeros > 0) total.add(zeros * w / zero_prob);
        if (ones > 0) total.add(-ones * w / one_prob);
    }
    return total.value();
}

/// Second derivative of the composite log-likelihood in n.
inline double curvature(double n, const LevelProfile& profile,
                        std::span<const double> ones_per_level, double p, double q) {
    detail::require_pq(p, q, "curvature");
    if (!(n >= 0)) throw DomainError("curvature: n must be >= 0");
    const double buckets = profile.buckets();
    const double pq = p - q;
    detail::CompensatedSum total;
    for (uint32_t j = 1; j <= profile.levels(); ++j) {
        const double lg = profile.log_gamma(j);
        const double g = std::exp(n * lg);
        if (g < detail::kPowFloor) continue;
        const double ones = ones_per_level[j - 1];
        const double zeros = buckets - ones;
        const double zero_prob = (1.0 - p) + pq * g;
        const double one_prob = q - pq * std::expm1(n * lg);
        const double w = pq * lg * lg * g;
        if (zeros > 0) total.add(zeros * (1.0 - p) * w / (zero_prob * zero_prob));
        if (ones > 0) total.add(-ones * p * w / (one_prob * one_prob));
    }
    return total.value();
}

namespace detail {

inline std::vector<double> to_real_counts(const BitCounts& counts) {
    return std::vector<double>(counts.ones_per_level.begin(), counts.ones_per_level.end());
}

} // namespace detail

inline double log_composite_likelihood(double n, const BitCounts& counts, double p, double q) {
    const LevelProfile profile(counts.buckets, counts.levels());
    return log_composite_likelihood(n, profile, detail::to_real_counts(counts), p, q);
}

inline double score(double n, const BitCounts& counts, double p, double q) {
    const LevelProfile profile(counts.buckets, counts.levels());
    return score(n, profile, detail::to_real_counts(counts), p, q);
}

inline double curvature(double n, const BitCounts& counts, double p, double q) {
    const LevelProfile profile(counts.buckets, counts.levels());
    return curvature(n, profile, detail::to_real_counts(counts), p, q);
}

namespace detail {

/// Closed-form estimated standard error at cardinality n (n >= 0 here;
/// the public wrapper enforces n > 0):
///   [ B (p-q) sum_j (log gamma_j)^2 gamma_j^n
///       (p / one_prob - (1-p) / zero_prob) ]^{-1/2}.
inline double estimated_std_error_impl(double n, const LevelProfile& profile, double p,
                                       double q) {
    const double pq = p - q;
    CompensatedSum sum;
    for (uint32_t j = 1; j <= profile.levels(); ++j) {
        const double lg = profile.log_gamma(j);
        const double g = std::exp(n * lg);
        if (g < kPowFloor) continue;
        const double zero_prob = (1.0 - p) + pq * g;
        const double one_prob = q - pq * std::expm1(n * lg);
        sum.add(lg * lg * g * (p / one_prob - (1.0 - p) / zero_prob));
    }
    const double info = profile.buckets() * pq * sum.value();
    if (!(info > 0)) return std::numeric_limits<double>::infinity();
    return 1.0 / std::sqrt(info);
}

} // namespace detail

/// Estimated standard error of the cardinality estimate, from the
/// expected curvature of the composite likelihood at n.
inline double estimated_std_error(double n, const SketchParams& params, double p, double q) {
    detail::require_pq(p, q, "estimated_std_error");
    if (!(n > 0) || !std::isfinite(n)) {
        throw DomainError("estimated_std_error: n must be positive and finite");
    }
    const LevelProfile profile(params.buckets, params.levels);
    return detail::estimated_std_error_impl(n, profile, p, q);
}

/// Outcome of the cardinality solve.
struct EstimateResult {
    double n_hat = 0.0;
    double std_err = 0.0;
    int iterations = 0;
    bool converged = false;
    double bracket_low = 0.0;
    double bracket_high = 0.0;
};

/// Maximize the composite likelihood over n. A geometric expansion from
/// n = 1 brackets a sign change of the score, then safeguarded Newton
/// (bisection whenever a step leaves the bracket or the curvature is not
/// negative) polishes the root. The expected likelihood is concave only
/// up to the true cardinality, so the bracket is what keeps realized
/// non-concavity from derailing the iteration.
inline EstimateResult estimate_cardinality(const BitCounts& counts, double p, double q) {
    detail::require_pq(p, q, "estimate_cardinality");
    const LevelProfile profile(counts.buckets, counts.levels());
    const std::vector<double> ones = detail::to_real_counts(counts);
    const auto score_at = [&](double n) { return score(n, profile, ones, p, q); };

    EstimateResult result;

    // sketches whose one-density sits at or below the q floor carry no
    // positive-cardinality signal
    if (score_at(1e-9) <= 0.0) {
        result.n_hat = 0.0;
        result.std_err = detail::estimated_std_error_impl(0.0, profile, p, q);
        result.converged = true;
        return result;
    }

    double lo = 1e-9;
    double hi = 1.0;
    double f_hi = score_at(hi);
    // expand until the score is strictly negative; a score that merely
    // underflows to zero (fully saturated sketch) never brackets a root
    while (!(f_hi < 0.0)) {
        if (hi >= kCardinalityCap) {
            throw SaturationError(
                "estimate_cardinality: score non-negative up to the 2^62 cap");
        }
        lo = hi;
        hi = std::min(hi * 2.0, kCardinalityCap);
        f_hi = score_at(hi);
    }

    const double score_tol =
        1e-12 * static_cast<double>(counts.buckets) * counts.levels();
    double x = 0.5 * (lo + hi);
    int it = 0;
    bool converged = false;
    while (it < 200) {
        const double fx = score_at(x);
        ++it;
        if (std::abs(fx) <= score_tol) {
            converged = true;
            break;
        }
        if (fx > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double curv = curvature(x, profile, ones, p, q);
        double next;
        if (curv < 0.0) {
            next = x - fx / curv;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        } else {
            next = 0.5 * (lo + hi);
        }
        const double step = std::abs(next - x);
        x = next;
        if (step <= 1e-6 * std::max(1.0, x)) {
            converged = true;
            break;
        }
    }
    if (!converged) x = 0.5 * (lo + hi);

    result.n_hat = x;
    result.std_err = detail::estimated_std_error_impl(x, profile, p, q);
    result.iterations = it;
    result.converged = converged;
    result.bracket_low = lo;
    result.bracket_high = hi;
    return result;
}

inline EstimateResult estimate_cardinality(const PrivateSketch& sketch) {
    return estimate_cardinality(BitCounts::from_sketch(sketch), sketch.mechanism().p,
                                sketch.mechanism().q);
}

inline EstimateResult estimate_cardinality(const PcsaSketch& sketch) {
    return estimate_cardinality(BitCounts::from_sketch(sketch), 1.0, 0.0);
}

} // namespace sfm
