#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sfm/error.hpp"
#include "sfm/mechanism.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/random.hpp"

namespace sfm {

enum class BoolOp : uint8_t { Or = 0, And = 1, Xor = 2 };

inline const char* to_string(BoolOp op) {
    switch (op) {
        case BoolOp::Or: return "or";
        case BoolOp::And: return "and";
        case BoolOp::Xor: return "xor";
    }
    return "?";
}

namespace detail {

inline void require_positive_budgets(std::span<const double> eps, const char* where) {
    for (double e : eps) {
        if (!(e > 0) || !std::isfinite(e)) {
            throw InvalidBudgetError(std::string(where) + ": budgets must be positive and finite");
        }
    }
}

} // namespace detail

/// Effective budget of an or/and combination of k >= 2 noisy vectors:
///   eps* = -log(1 - prod_i (1 - e^{-eps_i})).
/// The product switches to log-space accumulation when any budget is
/// below 1e-3; the naive form loses all precision there.
inline double eps_star_or(std::span<const double> eps) {
    if (eps.size() < 2) {
        throw InvalidBudgetError("eps_star_or: needs at least two budgets");
    }
    detail::require_positive_budgets(eps, "eps_star_or");
    const bool any_small = std::any_of(eps.begin(), eps.end(),
                                       [](double e) { return e < 1e-3; });
    double prod;
    if (any_small) {
        double log_prod = 0.0;
        for (double e : eps) log_prod += std::log(-std::expm1(-e));
        prod = std::exp(log_prod);
    } else {
        prod = 1.0;
        for (double e : eps) prod *= -std::expm1(-e);
    }
    return -std::log1p(-prod);
}

inline double eps_star_or(double eps1, double eps2) {
    const double both[2] = {eps1, eps2};
    return eps_star_or(both);
}

/// Effective budget of a bitwise xor of two noisy vectors:
///   eps* = log(1 + e^{eps1+eps2}) - log(e^{eps1} + e^{eps2}),
/// evaluated in a form that stays finite for large budgets.
inline double eps_star_xor(double eps1, double eps2) {
    const double both[2] = {eps1, eps2};
    detail::require_positive_budgets(both, "eps_star_xor");
    const double sum = eps1 + eps2;
    const double hi = std::max(eps1, eps2);
    const double lo = std::min(eps1, eps2);
    // log(1 + e^sum) = sum + log1p(e^-sum); log(e^a + e^b) = a + log1p(e^{b-a})
    return (sum + std::log1p(std::exp(-sum))) - (hi + std::log1p(std::exp(lo - hi)));
}

/// Budget combination record for a Boolean operation over noisy vectors.
struct EpsCombiner {
    BoolOp op;
    std::vector<double> inputs;
    double result;

    static EpsCombiner combine(BoolOp op, std::span<const double> eps) {
        double r;
        switch (op) {
            case BoolOp::Or:
            case BoolOp::And:
                r = eps_star_or(eps);
                break;
            case BoolOp::Xor: {
                if (eps.size() < 2) {
                    throw InvalidBudgetError("EpsCombiner: needs at least two budgets");
                }
                r = eps[0];
                for (size_t i = 1; i < eps.size(); ++i) r = eps_star_xor(r, eps[i]);
                break;
            }
            default:
                throw UnsupportedOperationError("EpsCombiner: unknown op");
        }
        return EpsCombiner{op, {eps.begin(), eps.end()}, r};
    }
};

/// Bernoulli table of a randomized k-way merge over symmetric-mechanism
/// bits. Entry t[x1..xk] (x1 the high-order index bit) is the probability
/// the merge outputs 1 after observing those k noisy input bits; drawing
/// from it makes the merged bit distributed exactly as the symmetric
/// channel at eps* applied to the or (or and) of the clean bits.
class MergeTable {
public:
    static constexpr uint32_t kMinArity = 2;
    static constexpr uint32_t kMaxArity = 16;
    /// Entries may round to just outside [0, 1] at the binding boundary;
    /// they are clamped after the reconstruction check passes.
    static constexpr double kBoundaryTolerance = 1e-10;

    MergeTable(std::span<const double> eps, BoolOp op)
        : eps_(eps.begin(), eps.end()), op_(op) {
        if (op != BoolOp::Or && op != BoolOp::And) {
            throw UnsupportedOperationError("MergeTable: table merges exist for or/and only");
        }
        if (eps_.size() < kMinArity || eps_.size() > kMaxArity) {
            throw DomainError("MergeTable: arity out of range [2, 16]");
        }
        detail::require_positive_budgets(eps_, "MergeTable");
        eps_star_ = eps_star_or(eps_);
        build();
    }

    uint32_t arity() const { return static_cast<uint32_t>(eps_.size()); }
    BoolOp op() const { return op_; }
    double eps_star() const { return eps_star_; }
    std::span<const double> probs() const { return probs_; }
    std::span<const double> budgets() const { return eps_; }

    double prob(uint32_t tuple_index) const { return probs_[tuple_index]; }

    /// Shared, immutable table for the given budgets, cached per
    /// (op, budgets rounded to 12 significant digits).
    static std::shared_ptr<const MergeTable> cached(std::span<const double> eps, BoolOp op);

private:
    void build() {
        const uint32_t k = arity();
        const size_t size = size_t(1) << k;
        const double q_star = 1.0 / (std::exp(eps_star_) + 1.0);

        // The target column is (1-q*) everywhere except q* on the
        // all-zeros (or) / all-ones (and) tuple, i.e. a rank-1 shift of a
        // constant vector. Rows of the Kronecker product of the inverse
        // kernels sum to one, so each table entry collapses to
        //   or:  t[x] = (1-q*) - tanh(eps*/2) * prod_i c_i(x_i)
        //   and: t[x] = q*     + tanh(eps*/2) * prod_i c_i(1 - x_i)
        // with c_i(0) = -1/expm1(-eps_i) and c_i(1) = -1/expm1(eps_i) the
        // first-column entries of K_i^{-1}. Evaluating the product per
        // entry avoids the cancellation blowup of an axis-by-axis inverse
        // transform when budgets are small or the arity is large.
        std::vector<double> col0(k), col1(k);
        for (uint32_t i = 0; i < k; ++i) {
            col0[i] = -1.0 / std::expm1(-eps_[i]);
            col1[i] = -1.0 / std::expm1(eps_[i]);
        }
        const double shift = std::tanh(0.5 * eps_star_);  // 1 - 2 q*

        probs_.assign(size, 0.0);
        for (size_t tuple = 0; tuple < size; ++tuple) {
            double prod = 1.0;
            for (uint32_t i = 0; i < k; ++i) {
                const bool bit = (tuple >> (k - 1 - i)) & 1;
                const bool pick1 = op_ == BoolOp::Or ? bit : !bit;
                prod *= pick1 ? col1[i] : col0[i];
            }
            probs_[tuple] = op_ == BoolOp::Or ? (1.0 - q_star) - shift * prod
                                              : q_star + shift * prod;
        }

        // reconstruction check: the forward kernels applied to the table
        // must reproduce the target column
        std::vector<double> target(size, op_ == BoolOp::Or ? 1.0 - q_star : q_star);
        if (op_ == BoolOp::Or) {
            target[0] = q_star;
        } else {
            target[size - 1] = 1.0 - q_star;
        }
        std::vector<double> recon = probs_;
        for (uint32_t axis = 0; axis < k; ++axis) {
            const double q = 1.0 / (std::exp(eps_[axis]) + 1.0);
            const size_t stride = size_t(1) << (k - 1 - axis);
            for (size_t base = 0; base < size; base += 2 * stride) {
                for (size_t i = base; i < base + stride; ++i) {
                    const double x0 = recon[i];
                    const double x1 = recon[i + stride];
                    recon[i] = (1.0 - q) * x0 + q * x1;
                    recon[i + stride] = q * x0 + (1.0 - q) * x1;
                }
            }
        }
        for (size_t i = 0; i < size; ++i) {
            if (std::abs(recon[i] - target[i]) > kBoundaryTolerance) {
                throw DomainError("MergeTable: reconstruction residual exceeds tolerance");
            }
        }

        for (double& t : probs_) {
            if (t < -kBoundaryTolerance || t > 1.0 + kBoundaryTolerance) {
                throw DomainError("MergeTable: entry outside [0, 1] beyond tolerance");
            }
            t = std::clamp(t, 0.0, 1.0);
        }
    }

    std::vector<double> eps_;
    BoolOp op_;
    double eps_star_ = 0.0;
    std::vector<double> probs_;
};

inline MergeTable build_merge_table(std::span<const double> eps, BoolOp op) {
    return MergeTable(eps, op);
}

inline std::shared_ptr<const MergeTable> MergeTable::cached(std::span<const double> eps,
                                                            BoolOp op) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const MergeTable>> cache;

    std::vector<double> sorted(eps.begin(), eps.end());
    std::sort(sorted.begin(), sorted.end());
    std::string key = to_string(op);
    char buf[32];
    for (double e : sorted) {
        std::snprintf(buf, sizeof buf, "|%.12g", e);
        key += buf;
    }

    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto table = std::make_shared<const MergeTable>(sorted, op);
    cache.emplace(std::move(key), table);
    return table;
}

namespace detail {

inline void require_same_params(const PrivateSketch& a, const PrivateSketch& b,
                                const char* where) {
    if (a.params() != b.params()) {
        throw IncompatibleSketchError(std::string(where) + ": sketch params differ");
    }
}

inline void require_kind(const PrivateSketch& s, MechanismKind kind, const char* where) {
    if (s.mechanism().kind != kind) {
        throw IncompatibleSketchError(std::string(where) + ": requires a " +
                                      std::string(to_string(kind)) + "-mechanism sketch, got " +
                                      to_string(s.mechanism().kind));
    }
}

} // namespace detail

/// Union merge of two xor-mechanism sketches by plain bitwise xor. The
/// result is distributed as a fresh xor-mechanism sketch of the combined
/// datasets at the reduced budget eps_star_or(eps1, eps2).
/// The law requires independent noise in the operands, so merging a
/// sketch object with itself is rejected.
inline PrivateSketch merge_xor_deterministic(const PrivateSketch& a, const PrivateSketch& b) {
    if (&a == &b) {
        throw IncompatibleSketchError("merge_xor_deterministic: operands must carry independent noise");
    }
    detail::require_same_params(a, b, "merge_xor_deterministic");
    detail::require_kind(a, MechanismKind::Xor, "merge_xor_deterministic");
    detail::require_kind(b, MechanismKind::Xor, "merge_xor_deterministic");

    BitMatrix bits = a.bits();
    bits.xor_with(b.bits());
    const double eps = eps_star_or(a.mechanism().epsilon, b.mechanism().epsilon);
    return PrivateSketch(a.params(), std::move(bits), mechanism_xor(eps),
                         a.merge_count() + b.merge_count() + 1);
}

/// Simultaneous k-way randomized merge of sym-mechanism sketches. Per bit
/// position, the k noisy bits select a table row and the output bit is one
/// fresh Bernoulli draw from it; the result is distributed as a sym
/// sketch of the or (or and) of the clean inputs at budget eps*.
inline PrivateSketch merge_sym_randomized(std::span<const PrivateSketch> sketches, BoolOp op,
                                          RandomSource& rng) {
    if (sketches.size() < 2) {
        throw IncompatibleSketchError("merge_sym_randomized: needs at least two sketches");
    }
    if (sketches.size() > MergeTable::kMaxArity) {
        throw DomainError("merge_sym_randomized: arity out of range [2, 16]");
    }
    if (op != BoolOp::Or && op != BoolOp::And) {
        throw UnsupportedOperationError("merge_sym_randomized: op must be or/and");
    }
    const uint32_t k = static_cast<uint32_t>(sketches.size());
    uint32_t total_merges = 0;
    for (const auto& s : sketches) {
        detail::require_kind(s, MechanismKind::Sym, "merge_sym_randomized");
        detail::require_same_params(sketches[0], s, "merge_sym_randomized");
        total_merges += s.merge_count();
    }

    // The cached table is built over sorted budgets; read operand bits in
    // the matching order (valid because the target column is symmetric).
    std::vector<uint32_t> order(k);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t i, uint32_t j) {
        return sketches[i].mechanism().epsilon < sketches[j].mechanism().epsilon;
    });
    std::vector<double> eps(k);
    for (uint32_t i = 0; i < k; ++i) eps[i] = sketches[order[i]].mechanism().epsilon;
    const auto table = MergeTable::cached(eps, op);

    const uint64_t n = sketches[0].params().bit_count();
    BitMatrix bits(n);
    for (uint64_t pos = 0; pos < n; ++pos) {
        uint32_t tuple = 0;
        for (uint32_t i = 0; i < k; ++i) {
            tuple = (tuple << 1) | static_cast<uint32_t>(sketches[order[i]].bits().test(pos));
        }
        bits.assign(pos, rng.bernoulli(table->prob(tuple)));
    }
    return PrivateSketch(sketches[0].params(), std::move(bits),
                         mechanism_sym(table->eps_star()), total_merges + 1);
}

/// Bitwise xor of two sym-mechanism sketches. No fresh randomness is
/// needed: the xor of two symmetric channels is itself a symmetric
/// channel applied to the xor of the clean bits, at eps_star_xor.
inline PrivateSketch xor_sym(const PrivateSketch& a, const PrivateSketch& b) {
    if (&a == &b) {
        throw IncompatibleSketchError("xor_sym: operands must carry independent noise");
    }
    detail::require_same_params(a, b, "xor_sym");
    detail::require_kind(a, MechanismKind::Sym, "xor_sym");
    detail::require_kind(b, MechanismKind::Sym, "xor_sym");

    BitMatrix bits = a.bits();
    bits.xor_with(b.bits());
    const double eps = eps_star_xor(a.mechanism().epsilon, b.mechanism().epsilon);
    return PrivateSketch(a.params(), std::move(bits), mechanism_sym(eps),
                         a.merge_count() + b.merge_count() + 1);
}

/// Complement of a sym-mechanism sketch. Negation commutes with the flip
/// channel only when q = 1 - p, so the budget is preserved; asymmetric
/// kinds are rejected.
inline PrivateSketch not_sym(const PrivateSketch& a) {
    if (a.mechanism().kind != MechanismKind::Sym) {
        throw UnsupportedOperationError(
            "not_sym: negation only commutes with the symmetric mechanism (q = 1 - p)");
    }
    BitMatrix bits = a.bits();
    bits.flip_all();
    return PrivateSketch(a.params(), std::move(bits), a.mechanism(), a.merge_count());
}

} // namespace sfm
