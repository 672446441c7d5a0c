#pragma once

// Small statistics toolbox: t-based confidence intervals for seed replications
// and a chi-square goodness-of-fit test with tail pooling.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qlim/numeric.hpp"

namespace qlim {

/// Two-sided 97.5% Student-t quantile (for 95% intervals).
inline double t_quantile_975(int df) {
    static constexpr double table[] = {
        0.0,    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179,  2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080,
        2.074,  2.069,  2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) throw std::invalid_argument("t_quantile_975: df must be >= 1");
    if (df <= 30) return table[df];
    if (df <= 40) return 2.021;
    if (df <= 60) return 2.000;
    if (df <= 120) return 1.980;
    return 1.960;
}

struct CiStat {
    double mean = 0.0;
    double half_width = 0.0;
    int n = 0;

    bool covers(double value) const { return std::abs(value - mean) <= half_width; }
};

/// Sample mean with a t-based 95% confidence half-width. Needs >= 2 values.
inline CiStat t_confidence(std::span<const double> xs) {
    if (xs.size() < 2) throw std::invalid_argument("t_confidence: need at least 2 replications");
    const int n = static_cast<int>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return {mean, t_quantile_975(n - 1) * sd / std::sqrt(static_cast<double>(n)), n};
}

/// True when two interval estimates do not overlap.
inline bool ci_disjoint(const CiStat& a, const CiStat& b) {
    return a.mean + a.half_width < b.mean - b.half_width || b.mean + b.half_width < a.mean - a.half_width;
}

/// True when the two means are indistinguishable at the combined 95% width.
inline bool ci_compatible(const CiStat& a, const CiStat& b) {
    const double hw = std::sqrt(a.half_width * a.half_width + b.half_width * b.half_width);
    return std::abs(a.mean - b.mean) <= hw;
}

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int pooled_bins = 0;
    long long total = 0;
};

/// Chi-square goodness of fit of observed counts against a fully specified
/// distribution. Bins are pooled greedily (left to right) until each pooled
/// bin has expected count >= min_expected; dof = pooled bins - 1.
inline ChiSquareResult chi_square_gof(std::span<const long long> counts, std::span<const double> probs,
                                      double min_expected = 5.0) {
    if (counts.size() != probs.size() || counts.empty())
        throw std::invalid_argument("chi_square_gof: size mismatch");
    long long total = 0;
    for (long long c : counts) total += c;
    if (total <= 0) throw std::invalid_argument("chi_square_gof: empty sample");

    std::vector<double> expected;
    std::vector<double> observed;
    double acc_e = 0.0, acc_o = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        acc_e += probs[i] * total;
        acc_o += static_cast<double>(counts[i]);
        if (acc_e >= min_expected) {
            expected.push_back(acc_e);
            observed.push_back(acc_o);
            acc_e = acc_o = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (!expected.empty()) {
            expected.back() += acc_e;
            observed.back() += acc_o;
        } else {
            expected.push_back(acc_e);
            observed.push_back(acc_o);
        }
    }
    if (expected.size() < 2) return {0.0, 0, 1.0, static_cast<int>(expected.size()), total};

    double stat = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const double diff = observed[i] - expected[i];
        if (expected[i] > 0.0) stat += diff * diff / expected[i];
    }
    const int dof = static_cast<int>(expected.size()) - 1;
    return {stat, dof, chi_square_sf(stat, dof), static_cast<int>(expected.size()), total};
}

/// Normal-approximation 95% interval for a multinomial cell proportion.
inline CiStat proportion_ci(long long hits, long long total) {
    if (total <= 0) throw std::invalid_argument("proportion_ci: empty sample");
    const double p = static_cast<double>(hits) / static_cast<double>(total);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(total));
    return {p, 1.96 * se, static_cast<int>(std::min<long long>(total, INT32_MAX))};
}

}  // namespace qlim
