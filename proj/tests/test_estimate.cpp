#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "sfm/estimate.hpp"
#include "sfm/mechanism.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/sketch.hpp"
#include "support/estimate_oracle.hpp"

using namespace sfm;
using sfm::test::loglik_central_difference;

namespace {

/// Naive per-bit evaluation of the marginal log-likelihood; the library
/// aggregates by level, this oracle does not.
double per_bit_loglik(const BitMatrix& bits, const SketchParams& params, double n, double p,
                      double q) {
    double total = 0.0;
    for (uint32_t i = 0; i < params.buckets; ++i) {
        for (uint32_t j = 1; j <= params.levels; ++j) {
            const double rho =
                std::ldexp(1.0, -static_cast<int>(std::min(j, params.levels - 1))) /
                params.buckets;
            const double g = std::pow(1.0 - rho, n);
            const uint64_t idx = static_cast<uint64_t>(i) * params.levels + (j - 1);
            total += bits.test(idx) ? std::log(p - (p - q) * g)
                                    : std::log(1.0 - p + (p - q) * g);
        }
    }
    return total;
}

PcsaSketch random_cardinality_sketch(const SketchParams& params, uint64_t n, uint64_t tag) {
    PcsaSketch s(params);
    char item[16];
    for (uint64_t i = 0; i < n; ++i) {
        for (int b = 0; b < 8; ++b) item[b] = static_cast<char>((tag >> (8 * b)) & 0xFF);
        for (int b = 0; b < 8; ++b) item[8 + b] = static_cast<char>((i >> (8 * b)) & 0xFF);
        s.insert(std::string_view(item, sizeof item));
    }
    return s;
}

std::vector<double> expected_ones(const LevelProfile& profile, double n, double p, double q) {
    std::vector<double> ones(profile.levels());
    for (uint32_t j = 1; j <= profile.levels(); ++j) {
        const double g = std::pow(profile.gamma(j), n);
        ones[j - 1] = profile.buckets() * (p - (p - q) * g);
    }
    return ones;
}

} // namespace

TEST_CASE("level profile") {
    SECTION("level probabilities per bucket sum to 1/B") {
        for (auto [buckets, levels] : {std::pair<uint32_t, uint32_t>{4096, 24},
                                       {4, 3},
                                       {64, 1},
                                       {1, 2},
                                       {1024, 54}}) {
            const LevelProfile profile(buckets, levels);
            double sum = 0.0;
            for (uint32_t j = 1; j <= levels; ++j) sum += profile.rho(j);
            CAPTURE(buckets, levels);
            CHECK(sum * buckets == 1.0);
        }
    }
    SECTION("gammas strictly inside (0, 1)") {
        const LevelProfile profile(4096, 24);
        for (uint32_t j = 1; j <= 24; ++j) {
            CHECK(profile.gamma(j) > 0.0);
            CHECK(profile.gamma(j) < 1.0);
        }
    }
    SECTION("1x1 sketch is degenerate") {
        CHECK_THROWS_AS(LevelProfile(1, 1), DomainError);
    }
}

TEST_CASE("log-likelihood boundary cases") {
    BitCounts counts{4, {0, 0, 0}};
    SECTION("n = 0, non-private, empty sketch: every term log 1") {
        CHECK(log_composite_likelihood(0.0, counts, 1.0, 0.0) == 0.0);
    }
    SECTION("n = 0 with observed ones is impossible under the identity channel") {
        BitCounts ones{4, {1, 0, 0}};
        CHECK(log_composite_likelihood(0.0, ones, 1.0, 0.0) == kLogLikelihoodFloor);
    }
    SECTION("p <= q rejected") {
        CHECK_THROWS_AS(log_composite_likelihood(1.0, counts, 0.3, 0.3), MechanismError);
        CHECK_THROWS_AS(score(1.0, counts, 0.2, 0.6), MechanismError);
    }
}

TEST_CASE("level aggregation equals per-bit summation") {
    SECTION("fixed small instance") {
        const SketchParams params{4, 3, 0};
        BitMatrix bits(params.bit_count());
        // counts per level: 2, 1, 3
        bits.set(0 * 3 + 0);
        bits.set(2 * 3 + 0);
        bits.set(1 * 3 + 1);
        bits.set(0 * 3 + 2);
        bits.set(1 * 3 + 2);
        bits.set(3 * 3 + 2);
        const BitCounts counts = BitCounts::from_bits(bits, params);
        REQUIRE(counts.ones_per_level == std::vector<uint64_t>{2, 1, 3});

        const double p = 0.731059, q = 0.268941;
        const double lib = log_composite_likelihood(10.0, counts, p, q);
        const double oracle = per_bit_loglik(bits, params, 10.0, p, q);
        CHECK(std::abs(lib - oracle) <= 1e-12 * std::abs(oracle));
    }
    SECTION("random instances across mechanisms") {
        const SketchParams params{64, 12, 17};
        std::mt19937_64 gen(123);
        for (int rep = 0; rep < 5; ++rep) {
            BitMatrix bits(params.bit_count());
            for (uint64_t i = 0; i < params.bit_count(); ++i) {
                if (gen() & 1) bits.set(i);
            }
            const BitCounts counts = BitCounts::from_bits(bits, params);
            for (const auto& [p, q] : std::vector<std::pair<double, double>>{
                     {0.7310585786300049, 0.2689414213699951}, {0.5, 0.18393972058572117}}) {
                for (double n : {3.0, 50.0, 400.0}) {
                    const double lib = log_composite_likelihood(n, counts, p, q);
                    const double oracle = per_bit_loglik(bits, params, n, p, q);
                    CAPTURE(rep, p, n);
                    CHECK(std::abs(lib - oracle) <= 1e-12 * std::abs(oracle));
                }
            }
        }
    }
}

TEST_CASE("score and curvature match finite differences") {
    const SketchParams params{1024, 24, 31};
    const std::vector<double> budgets{0.25, 1.0, 4.0};
    const std::vector<double> grid_n{10, 1e3, 1e6};

    uint64_t tag = 100;
    for (double n_true : grid_n) {
        const PcsaSketch raw =
            random_cardinality_sketch(params, static_cast<uint64_t>(n_true), tag++);
        std::vector<std::pair<double, double>> channels;
        for (double eps : budgets) {
            const FlipMechanism m = mechanism_sym(eps);
            channels.emplace_back(m.p, m.q);
        }
        channels.emplace_back(1.0, 0.0);  // non-private pair

        for (size_t c = 0; c < channels.size(); ++c) {
            const auto [p, q] = channels[c];
            BitCounts counts;
            if (p == 1.0) {
                counts = BitCounts::from_sketch(raw);
            } else {
                RandomSource rng = RandomSource::seeded(5000 + tag * 10 + c);
                FlipMechanism mech{p, q, budgets[c], MechanismKind::Sym};
                counts = BitCounts::from_sketch(privatize(raw, mech, rng));
            }
            const double h = std::max(1e-4, 1e-6 * n_true);

            const double fd_score = loglik_central_difference(n_true, h, counts, p, q);
            const double an_score = score(n_true, counts, p, q);
            CAPTURE(n_true, p, q, an_score, fd_score);
            CHECK(std::abs(an_score - fd_score) <=
                  1e-5 * std::max(std::abs(an_score), std::abs(fd_score)));

            const double fd_curv =
                (score(n_true + h, counts, p, q) - score(n_true - h, counts, p, q)) /
                (2.0 * h);
            const double an_curv = curvature(n_true, counts, p, q);
            CAPTURE(an_curv, fd_curv);
            CHECK(std::abs(an_curv - fd_curv) <=
                  1e-5 * std::max(std::abs(an_curv), std::abs(fd_curv)));
        }
    }
}

TEST_CASE("score vanishes at the truth under expected counts") {
    const LevelProfile profile(4096, 24);
    for (double eps : {0.25, 1.0, 4.0}) {
        const FlipMechanism m = mechanism_sym(eps);
        for (double n : {100.0, 1e4, 1e6}) {
            const std::vector<double> ones = expected_ones(profile, n, m.p, m.q);
            const double s = score(n, profile, ones, m.p, m.q);
            // scale: the score changes by O(|curvature|) per unit n
            const double scale =
                std::abs(curvature(n, profile, ones, m.p, m.q)) * std::max(1.0, n);
            CAPTURE(eps, n, s, scale);
            CHECK(std::abs(s) <= 1e-10 * std::max(1.0, scale));
        }
    }
}

TEST_CASE("estimated standard error") {
    const SketchParams params{4096, 24, 0};

    SECTION("matches 1/sqrt(-curvature) at expected counts") {
        const LevelProfile profile(params.buckets, params.levels);
        for (double eps : {0.5, 1.0, 2.0}) {
            const FlipMechanism m = mechanism_sym(eps);
            for (double n : {1e3, 1e5, 1e6}) {
                const std::vector<double> ones = expected_ones(profile, n, m.p, m.q);
                const double via_curv =
                    1.0 / std::sqrt(-curvature(n, profile, ones, m.p, m.q));
                const double closed = estimated_std_error(n, params, m.p, m.q);
                CAPTURE(eps, n);
                CHECK(std::abs(closed - via_curv) <= 1e-12 * closed);
            }
        }
    }

    SECTION("scales like B^{-1/2}") {
        const FlipMechanism m = mechanism_sym(2.0);
        const double n = 1e6;
        std::vector<double> log_b, log_se;
        double prev = 1e300;
        for (uint32_t buckets : {256u, 1024u, 4096u, 16384u}) {
            const double se =
                estimated_std_error(n, SketchParams{buckets, 24, 0}, m.p, m.q);
            CHECK(se < prev);
            prev = se;
            log_b.push_back(std::log(static_cast<double>(buckets)));
            log_se.push_back(std::log(se));
        }
        // least-squares slope of log SE vs log B
        const size_t m_pts = log_b.size();
        double mean_x = 0, mean_y = 0;
        for (size_t i = 0; i < m_pts; ++i) {
            mean_x += log_b[i];
            mean_y += log_se[i];
        }
        mean_x /= m_pts;
        mean_y /= m_pts;
        double sxx = 0, sxy = 0;
        for (size_t i = 0; i < m_pts; ++i) {
            sxx += (log_b[i] - mean_x) * (log_b[i] - mean_x);
            sxy += (log_b[i] - mean_x) * (log_se[i] - mean_y);
        }
        const double slope = sxy / sxx;
        CHECK(slope == Catch::Approx(-0.5).margin(0.02));
    }

    SECTION("domain errors") {
        CHECK_THROWS_AS(estimated_std_error(0.0, params, 0.7, 0.3), DomainError);
        CHECK_THROWS_AS(estimated_std_error(-5.0, params, 0.7, 0.3), DomainError);
        CHECK_THROWS_AS(estimated_std_error(10.0, params, 0.3, 0.3), MechanismError);
    }
}

TEST_CASE("estimate_cardinality") {
    const SketchParams params{256, 24, 3};

    SECTION("empty sketch estimates zero") {
        const PcsaSketch empty(params);
        const EstimateResult r = estimate_cardinality(empty);
        CHECK(r.n_hat == 0.0);
        CHECK(r.converged);
        CHECK(r.bracket_low == 0.0);
        CHECK(r.bracket_high == 0.0);
    }

    SECTION("all-zero private sketch estimates zero") {
        PcsaSketch empty(params);
        BitCounts zero_counts = BitCounts::from_sketch(empty);
        const FlipMechanism m = mechanism_sym(1.0);
        const EstimateResult r = estimate_cardinality(zero_counts, m.p, m.q);
        CHECK(r.n_hat == 0.0);
        CHECK(r.std_err > 0.0);
    }

    SECTION("deterministic in its inputs") {
        const PcsaSketch raw = random_cardinality_sketch(params, 5000, 77);
        RandomSource rng = RandomSource::seeded(9);
        const PrivateSketch noisy = privatize(raw, mechanism_sym(1.0), rng);
        const EstimateResult a = estimate_cardinality(noisy);
        const EstimateResult b = estimate_cardinality(noisy);
        CHECK(a.n_hat == b.n_hat);
        CHECK(a.iterations == b.iterations);
    }

    SECTION("non-private estimates are close at moderate load") {
        const PcsaSketch raw = random_cardinality_sketch(params, 2000, 88);
        const EstimateResult r = estimate_cardinality(raw);
        CHECK(r.converged);
        CHECK(r.bracket_low <= r.n_hat);
        CHECK(r.n_hat <= r.bracket_high);
        // classical PCSA error regime ~ 0.78/sqrt(B) ~ 5%
        CHECK(std::abs(r.n_hat / 2000.0 - 1.0) < 0.25);
    }

    SECTION("private estimates recover the truth within a few SE") {
        const SketchParams big{4096, 24, 5};
        const PcsaSketch raw = random_cardinality_sketch(big, 100'000, 99);
        RandomSource rng = RandomSource::seeded(41);
        const PrivateSketch noisy = privatize(raw, mechanism_sym(1.0), rng);
        const EstimateResult r = estimate_cardinality(noisy);
        CHECK(r.converged);
        CHECK(std::abs(r.n_hat - 100'000.0) <= 5.0 * r.std_err);
    }

    SECTION("saturated sketch raises a saturation error") {
        BitMatrix all(params.bit_count());
        for (uint64_t i = 0; i < params.bit_count(); ++i) all.set(i);
        const BitCounts counts = BitCounts::from_bits(all, params);
        CHECK_THROWS_AS(estimate_cardinality(counts, 1.0, 0.0), SaturationError);
        const FlipMechanism m = mechanism_sym(1.0);
        CHECK_THROWS_AS(estimate_cardinality(counts, m.p, m.q), SaturationError);
    }

    SECTION("one free bit keeps a nearly saturated raw sketch estimable") {
        BitMatrix almost(params.bit_count());
        for (uint64_t i = 1; i < params.bit_count(); ++i) almost.set(i);
        const BitCounts counts = BitCounts::from_bits(almost, params);
        const EstimateResult r = estimate_cardinality(counts, 1.0, 0.0);
        CHECK(r.converged);
        CHECK(r.n_hat > 0.0);
        CHECK(std::isfinite(r.n_hat));
    }
}

TEST_CASE("score at the truth is unbiased over seeded trials") {
    constexpr uint64_t kTrials = 2000;
    constexpr uint64_t kN = 100'000;
    const SketchParams params{1024, 24, 2024};
    const FlipMechanism mech = mechanism_sym(1.0);
    const LevelProfile profile(params.buckets, params.levels);

    std::vector<double> scores(kTrials, 0.0);
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    auto worker = [&](unsigned w) {
        for (uint64_t t = w; t < kTrials; t += threads) {
            PcsaSketch raw = random_cardinality_sketch(params, kN, 7000 + t);
            RandomSource rng = RandomSource::seeded_stream(2024, t);
            const PrivateSketch noisy = privatize(raw, mech, rng);
            const BitCounts counts = BitCounts::from_sketch(noisy);
            std::vector<double> ones(counts.ones_per_level.begin(),
                                     counts.ones_per_level.end());
            scores[t] = score(static_cast<double>(kN), profile, ones, mech.p, mech.q);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();

    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= kTrials;
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= (kTrials - 1);
    const double se_of_mean = std::sqrt(var / kTrials);
    CAPTURE(mean, se_of_mean);
    CHECK(std::abs(mean) <= 3.0 * se_of_mean);
}
