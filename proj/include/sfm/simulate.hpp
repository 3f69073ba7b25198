#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sfm/estimate.hpp"
#include "sfm/merge.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/random.hpp"
#include "sfm/sketch.hpp"

namespace sfm {

enum class SimMethod : uint8_t { SfmSym, SfmXor, NonPrivate };

inline const char* to_string(SimMethod m) {
    switch (m) {
        case SimMethod::SfmSym: return "sfm_sym";
        case SimMethod::SfmXor: return "sfm_xor";
        case SimMethod::NonPrivate: return "non_private";
    }
    return "?";
}

/// One experiment configuration: per cardinality in `cardinalities`, run
/// `trials` independent trials of sketch -> privatize -> (k-way merge)
/// -> estimate on freshly synthesized distinct items.
struct SimulationSpec {
    SimMethod method = SimMethod::SfmSym;
    double eps = 1.0;  ///< per-sketch budget; ignored for NonPrivate
    uint32_t buckets = 4096;
    uint32_t levels = 24;
    std::vector<uint64_t> cardinalities;
    uint32_t trials = 1000;
    uint32_t fanout = 1;  ///< k sketches merged per trial; 1 = no merge
    uint64_t seed = 0;
    /// Split the n items across the k sketches instead of sketching the
    /// same n items k times with independent noise.
    bool disjoint = false;
    unsigned threads = 0;  ///< 0 = hardware concurrency

    void validate() const {
        if (trials < 1) throw DomainError("simulation: trials must be >= 1");
        if (fanout < 1) throw DomainError("simulation: fanout must be >= 1");
        if (cardinalities.empty()) throw DomainError("simulation: no cardinalities given");
        for (uint64_t n : cardinalities) {
            if (n < 1) throw DomainError("simulation: cardinalities must be positive");
        }
        if (method != SimMethod::NonPrivate && (!(eps > 0) || !std::isfinite(eps))) {
            throw InvalidBudgetError("simulation: eps must be positive and finite");
        }
    }
};

/// Aggregated outcome of one (method, eps, n, fanout) cell.
struct SimulationRow {
    SimMethod method;
    double eps;  ///< per-sketch budget (+inf for NonPrivate)
    uint32_t buckets;
    uint32_t levels;
    uint64_t n;
    uint32_t trials;
    uint32_t fanout;
    double eps_effective;  ///< post-merge budget parameter
    double rrmse;
    double est_rel_se;  ///< analytic SE(n)/n at the effective mechanism
    double mean_estimate;
    double mse;
    std::vector<double> estimates;  ///< per-trial n_hat, trial order
};

/// Error summary of a batch of estimates against a known truth.
struct TrialMetrics {
    double rrmse = 0.0;
    double relative_efficiency = 1.0;  ///< MSE(baseline) / MSE(this)
    double est_rel_se = 0.0;
};

inline double rrmse(std::span<const double> estimates, double n) {
    double sq = 0.0;
    for (double e : estimates) sq += (e - n) * (e - n);
    return std::sqrt(sq / static_cast<double>(estimates.size())) / n;
}

/// MSE(other) / MSE(preferred): how many times more buckets the other
/// method needs for parity.
inline double relative_efficiency(const SimulationRow& preferred, const SimulationRow& other) {
    return other.mse / preferred.mse;
}

inline TrialMetrics trial_metrics(const SimulationRow& row, const SimulationRow& baseline) {
    return TrialMetrics{row.rrmse, relative_efficiency(row, baseline), row.est_rel_se};
}

namespace detail {

/// Items are 16-byte records (namespace, counter); sequential counters
/// per namespace make every trial's item set collision-free and disjoint
/// from every other trial's.
inline void encode_item(char* buf, uint64_t ns, uint64_t counter) {
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((ns >> (8 * i)) & 0xFF);
    for (int i = 0; i < 8; ++i) buf[8 + i] = static_cast<char>((counter >> (8 * i)) & 0xFF);
}

inline double run_one_trial(const SimulationSpec& spec, uint64_t n, uint64_t global_trial) {
    const SketchParams params{spec.buckets, spec.levels, spec.seed};
    RandomSource trial_rng = RandomSource::seeded_stream(spec.seed, global_trial);
    const uint32_t k = spec.fanout;

    char item[16];
    if (spec.method == SimMethod::NonPrivate) {
        // exact merging is lossless, so the union sketch is built directly
        PcsaSketch sketch(params);
        for (uint64_t i = 0; i < n; ++i) {
            encode_item(item, global_trial, i);
            sketch.insert(std::string_view(item, sizeof item));
        }
        return estimate_cardinality(sketch).n_hat;
    }

    const FlipMechanism mech = spec.method == SimMethod::SfmSym ? mechanism_sym(spec.eps)
                                                                : mechanism_xor(spec.eps);

    std::vector<PcsaSketch> raw;
    if (spec.disjoint) {
        raw.assign(k, PcsaSketch(params));
        for (uint64_t i = 0; i < n; ++i) {
            encode_item(item, global_trial, i);
            raw[i % k].insert(std::string_view(item, sizeof item));
        }
    } else {
        PcsaSketch sketch(params);
        for (uint64_t i = 0; i < n; ++i) {
            encode_item(item, global_trial, i);
            sketch.insert(std::string_view(item, sizeof item));
        }
        raw.assign(k, sketch);
    }

    std::vector<PrivateSketch> noisy;
    noisy.reserve(k);
    for (uint32_t c = 0; c < k; ++c) {
        RandomSource rng = trial_rng.derive(c);
        noisy.push_back(privatize(raw[c], mech, rng));
    }

    if (k == 1) return estimate_cardinality(noisy[0]).n_hat;

    if (spec.method == SimMethod::SfmSym) {
        RandomSource merge_rng = trial_rng.derive(k);
        return estimate_cardinality(merge_sym_randomized(noisy, BoolOp::Or, merge_rng)).n_hat;
    }
    PrivateSketch merged = merge_xor_deterministic(noisy[0], noisy[1]);
    for (uint32_t c = 2; c < k; ++c) merged = merge_xor_deterministic(merged, noisy[c]);
    return estimate_cardinality(merged).n_hat;
}

inline FlipMechanism effective_mechanism(const SimulationSpec& spec) {
    if (spec.method == SimMethod::NonPrivate) return mechanism_none();
    double eps = spec.eps;
    if (spec.fanout > 1) {
        const std::vector<double> budgets(spec.fanout, spec.eps);
        eps = eps_star_or(budgets);
    }
    return spec.method == SimMethod::SfmSym ? mechanism_sym(eps) : mechanism_xor(eps);
}

} // namespace detail

/// Run the full spec. Trials are distributed over worker threads; every
/// trial draws from its own (seed, trial index) stream and results are
/// reduced in trial order, so the output is identical for any thread
/// count.
inline std::vector<SimulationRow> run_simulation(const SimulationSpec& spec) {
    spec.validate();
    const SketchParams params{spec.buckets, spec.levels, spec.seed};
    params.validate();

    unsigned threads = spec.threads != 0 ? spec.threads : std::thread::hardware_concurrency();
    if (threads < 1) threads = 1;
    const FlipMechanism eff = detail::effective_mechanism(spec);

    std::vector<SimulationRow> rows;
    rows.reserve(spec.cardinalities.size());
    for (size_t row_idx = 0; row_idx < spec.cardinalities.size(); ++row_idx) {
        const uint64_t n = spec.cardinalities[row_idx];
        std::vector<double> estimates(spec.trials, 0.0);
        const uint64_t trial_base = row_idx * static_cast<uint64_t>(spec.trials);

        auto worker = [&](unsigned worker_idx) {
            for (uint32_t t = worker_idx; t < spec.trials; t += threads) {
                estimates[t] = detail::run_one_trial(spec, n, trial_base + t);
            }
        };
        if (threads == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(threads);
            for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
            for (auto& th : pool) th.join();
        }

        double sum = 0.0, sq = 0.0;
        for (double e : estimates) {
            sum += e;
            sq += (e - static_cast<double>(n)) * (e - static_cast<double>(n));
        }
        const double mse = sq / spec.trials;

        SimulationRow row;
        row.method = spec.method;
        row.eps = spec.method == SimMethod::NonPrivate
                      ? std::numeric_limits<double>::infinity()
                      : spec.eps;
        row.buckets = spec.buckets;
        row.levels = spec.levels;
        row.n = n;
        row.trials = spec.trials;
        row.fanout = spec.fanout;
        row.eps_effective = eff.epsilon;
        row.rrmse = std::sqrt(mse) / static_cast<double>(n);
        row.est_rel_se = estimated_std_error(static_cast<double>(n), params, eff.p, eff.q) /
                         static_cast<double>(n);
        row.mean_estimate = sum / spec.trials;
        row.mse = mse;
        row.estimates = std::move(estimates);
        rows.push_back(row);
    }
    return rows;
}

inline constexpr const char* kCsvHeader = "method,eps,B,P,n,trials,rrmse,est_rel_se,mean_estimate";

/// Emit rows as CSV ('.' decimal separator, no grouping), one row per
/// (method, eps, n) cell, preceded by the header row.
inline void write_csv(std::span<const SimulationRow> rows, std::ostream& out) {
    out << kCsvHeader << '\n';
    char buf[256];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.12g,%u,%u,%llu,%u,%.12g,%.12g,%.12g",
                      to_string(row.method), row.eps, row.buckets, row.levels,
                      static_cast<unsigned long long>(row.n), row.trials, row.rrmse,
                      row.est_rel_se, row.mean_estimate);
        out << buf << '\n';
    }
}

} // namespace sfm
