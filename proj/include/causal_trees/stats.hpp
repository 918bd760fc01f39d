#pragma once

// Shared numerics: distribution functions, samplers and small reductions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "causal_trees/errors.hpp"

namespace causal_trees {

using Rng = std::mt19937_64;

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic sub-stream seeding: (seed, stream) -> independent engine.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("normal_quantile: p must lie in (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Upper-tail chi-squared quantile: Q with P(X > Q) = p. Solved through the
// inverse of the regularized lower incomplete gamma function P(df/2, Q/2).
inline double chi_squared_upper_quantile(double df, double p) {
    if (!(df > 0.0)) throw UsageError("chi_squared_upper_quantile: df must be positive");
    if (!(p > 0.0 && p < 1.0)) throw UsageError("chi_squared_upper_quantile: p must lie in (0,1)");
    return 2.0 * boost::math::gamma_q_inv(df / 2.0, p);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform01(Rng& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

inline double chi_squared_draw(Rng& rng, double df) {
    std::chi_squared_distribution<double> dist(df);
    return dist(rng);
}

// Standard normal truncated to (lower, +inf). Uses naive rejection when the
// bound is below the mean and Robert's exponential proposal in the tail.
inline double truncated_standard_normal_above(double lower, Rng& rng) {
    if (lower <= 0.0) {
        for (;;) {
            const double z = standard_normal(rng);
            if (z > lower) return z;
        }
    }
    const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
    for (;;) {
        const double z = lower - std::log(uniform01(rng)) / rate;
        const double accept = std::exp(-0.5 * (z - rate) * (z - rate));
        if (uniform01(rng) <= accept) return z;
    }
}

// Draw from N(mean, sd^2) restricted to (0, inf) when positive, (-inf, 0) otherwise.
inline double truncated_normal_by_sign(double mean, double sd, bool positive, Rng& rng) {
    if (positive) return mean + sd * truncated_standard_normal_above(-mean / sd, rng);
    return mean - sd * truncated_standard_normal_above(mean / sd, rng);
}

inline double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double weighted_mean(std::span<const double> x, std::span<const double> w) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += w[i] * x[i];
        den += w[i];
    }
    return num / den;
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Linear-interpolation quantile of an ascending-sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw UsageError("quantile of an empty sample");
    const double h = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Worker cap from CAUSAL_TREES_THREADS, else the hardware concurrency.
inline std::size_t worker_threads() {
    if (const char* env = std::getenv("CAUSAL_TREES_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n). Tasks must write disjoint outputs; results are
// then independent of scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t max_workers = worker_threads()) {
    const std::size_t workers = std::min(n, max_workers);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += workers) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace causal_trees
