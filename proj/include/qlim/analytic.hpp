#pragma once

// Closed-form quantities for dispatcher-driven load balancing under a strict
// queue limit: admissions per update window, the throughput cap as a function
// of message rate and queue limit, finite-size open/closed distributions and
// blocking, and the derived quantities of the two-stage cool-down variant.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/numeric.hpp"

namespace qlim {

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

/// Update law of the timer-driven scheme: servers are probed a fixed interval
/// after they close, and a job is admitted only when its queue position can be
/// guaranteed to stay within the limit.
struct UpdateLaw {
    double update_interval = 1.0;  // tau, time units
    int queue_limit = 1;           // K, jobs

    void validate() const {
        if (!(update_interval > 0.0)) throw std::invalid_argument("UpdateLaw: update_interval must be > 0");
        if (queue_limit < 1) throw std::invalid_argument("UpdateLaw: queue_limit must be >= 1");
    }
};

/// Inputs of the universal throughput bound.
struct BoundParams {
    double message_rate = 1.0;  // delta, probes per server per time unit
    int queue_limit = 1;        // K
    double mean_speed = 1.0;    // system-wide average server speed

    void validate() const {
        if (!(message_rate > 0.0)) throw std::invalid_argument("BoundParams: message_rate must be > 0");
        if (queue_limit < 1) throw std::invalid_argument("BoundParams: queue_limit must be >= 1");
        if (!(mean_speed > 0.0)) throw std::invalid_argument("BoundParams: mean_speed must be > 0");
    }
};

/// Cool-down durations of the queue-length-minimizing variant (queue limit 2).
/// tau1 covers the window after the first job, tau2 the window after the
/// second, tau3 the repeat window when an update still finds a full queue.
struct ExtensionParams {
    double tau1 = 0.0;
    double tau2 = 1.0;
    double tau3 = 1.0;

    void validate() const {
        if (!(tau1 >= 0.0)) throw std::invalid_argument("ExtensionParams: tau1 must be >= 0");
        if (!(tau2 > 0.0)) throw std::invalid_argument("ExtensionParams: tau2 must be > 0");
        if (!(tau3 > 0.0))
            throw std::domain_error(
                "ExtensionParams: tau3 must be > 0 (a zero repeat window makes the "
                "full-queue state absorbing and divides by zero in its throughput)");
    }
};

/// Window-outcome probabilities and relative throughputs of the cool-down
/// variant. remain_after_fill[j] is the probability that j jobs remain when
/// the update after a fill window fires; remain_after_repeat[j] the same for
/// a repeat window that started with a full queue.
struct ExtensionDerived {
    std::array<double, 3> remain_after_fill{};    // p20, p21, p22
    std::array<double, 3> remain_after_repeat{};  // q20, q21, q22
    double gamma1 = 0.0;  // relative throughput, idle-open class
    double gamma2 = 1.0;  // relative throughput, half-open class
    double kappa1 = 1.0;  // relative throughput, first cool-down node
    double kappa2 = 1.0;  // relative throughput, fill cool-down node
    double kappa3 = 0.0;  // relative throughput, repeat cool-down node
};

// ---------------------------------------------------------------------------
// Poisson helpers
// ---------------------------------------------------------------------------

namespace detail {

// P(Poisson(tau) = i) in log domain; only needed when e^{-tau} underflows.
inline double poisson_log_pmf(int i, double tau) {
    return i * std::log(tau) - tau - log_gamma(i + 1.0);
}

// Forward-recursion CDF: terms are Poisson probabilities, so they never
// overflow; e^{-tau} underflows only past tau ~ 745 where a log-domain
// evaluation takes over.
inline double poisson_cdf_direct(int k, double tau) {
    double term = std::exp(-tau);
    double sum = term;
    for (int i = 0; i < k; ++i) {
        term *= tau / (i + 1);
        sum += term;
    }
    return std::min(sum, 1.0);
}

inline double poisson_cdf_log_domain(int k, double tau) {
    std::vector<double> logs(static_cast<std::size_t>(k) + 1);
    for (int i = 0; i <= k; ++i) logs[static_cast<std::size_t>(i)] = poisson_log_pmf(i, tau);
    return std::exp(log_sum_exp(logs));
}

// P(Poisson(tau) > k) without cancellation: sums the upper tail directly
// when the tail is the small side.
inline double poisson_tail_gt(int k, double tau) {
    if (tau >= k + 1.0) {
        // tail is >= ~0.5 here; 1 - cdf loses nothing
        if (tau > 700.0) return 1.0 - poisson_cdf_log_domain(k, tau);
        return 1.0 - poisson_cdf_direct(k, tau);
    }
    // small-tail side: sum pmf terms upward from k+1 until negligible
    double term = std::exp(-tau + (k + 1) * std::log(tau) - log_gamma(k + 2.0));
    double sum = term;
    for (int i = k + 1; i < k + 2000; ++i) {
        term *= tau / (i + 1);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    return std::min(sum, 1.0);
}

}  // namespace detail

/// P(Poisson(tau) <= k): the probability that at most k unit-rate services
/// complete in a window of length tau.
inline double poisson_cdf(int k, double tau) {
    if (k < 0) throw std::domain_error("poisson_cdf: k must be >= 0");
    if (tau < 0.0) throw std::domain_error("poisson_cdf: tau must be >= 0");
    if (tau == 0.0) return 1.0;
    if (tau > 700.0) return detail::poisson_cdf_log_domain(k, tau);
    return detail::poisson_cdf_direct(k, tau);
}

// ---------------------------------------------------------------------------
// Core closed forms
// ---------------------------------------------------------------------------

/// Expected number of admissions enabled by one update: E[min(K, Poisson(tau))]
/// = sum_{k=0}^{K-1} P(Poisson(tau) > k). Strictly increasing and concave in
/// tau, with values in (0, K).
inline double expected_admissions(const UpdateLaw& law) {
    law.validate();
    double total = 0.0;
    for (int k = 0; k < law.queue_limit; ++k) total += detail::poisson_tail_gt(k, law.update_interval);
    return total;
}

/// Universal throughput cap per server for message rate delta and queue
/// limit K: delta * E[min(K, Poisson(mean_speed / delta))].
inline double throughput_bound(const BoundParams& params) {
    params.validate();
    UpdateLaw law{params.mean_speed / params.message_rate, params.queue_limit};
    return params.message_rate * expected_admissions(law);
}

/// Average number of probe exchanges per admitted job; independent of the
/// arrival rate and the system size.
inline double messages_per_admitted_job(const UpdateLaw& law) {
    return 1.0 / expected_admissions(law);
}

/// Distribution of the number of jobs remaining when the update after a full
/// window fires: p[k] for k jobs left, k = 0..K. p[k] = e^{-tau} tau^{K-k} /
/// (K-k)! for k > 0 and the complementary mass at k = 0.
inline std::vector<double> update_transition_probs(const UpdateLaw& law) {
    // tau = 0 is accepted here as the degenerate zero-window limit.
    if (law.queue_limit < 1) throw std::invalid_argument("update_transition_probs: queue_limit must be >= 1");
    if (!(law.update_interval >= 0.0)) throw std::invalid_argument("update_transition_probs: tau must be >= 0");
    const int K = law.queue_limit;
    const double tau = law.update_interval;
    std::vector<double> p(static_cast<std::size_t>(K) + 1, 0.0);
    if (tau == 0.0) {
        p[static_cast<std::size_t>(K)] = 1.0;
        return p;
    }
    // pmf of completions c = K - k, computed by the same overflow-free recursion
    double term = tau > 700.0 ? std::exp(detail::poisson_log_pmf(0, tau)) : std::exp(-tau);
    double partial = term;
    p[static_cast<std::size_t>(K)] = term;  // zero completions
    for (int c = 1; c < K; ++c) {
        term *= tau / c;
        partial += term;
        p[static_cast<std::size_t>(K - c)] = term;
    }
    p[0] = 1.0 - partial;  // K or more completions empty the queue
    if (p[0] < 0.0) p[0] = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// Open/closed aggregate and blocking (finite N)
// ---------------------------------------------------------------------------

namespace detail {

// Log-weights of the two-level aggregate: w_n ∝ r^n * s^{N-n} / (N-n)! where
// n counts servers on the open side. Everything stays in log domain; the
// naive form overflows near N ~ 100.
inline std::vector<double> aggregate_log_weights(int N, double log_r, double log_s) {
    std::vector<double> w(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n <= N; ++n)
        w[static_cast<std::size_t>(n)] = n * log_r + (N - n) * log_s - log_gamma(N - n + 1.0);
    return w;
}

}  // namespace detail

/// pmf over n = 0..N for the aggregate with per-open factor `r` and total
/// closed mean `s`: w_n ∝ r^n s^{N-n}/(N-n)!, normalized. Finite for N up to
/// at least 1e5.
inline std::vector<double> aggregate_level_pmf(int N, double r, double s) {
    if (N < 1) throw std::invalid_argument("aggregate_level_pmf: N must be >= 1");
    if (!(r > 0.0) || !(s > 0.0)) throw std::invalid_argument("aggregate_level_pmf: factors must be > 0");
    auto w = detail::aggregate_log_weights(N, std::log(r), std::log(s));
    const double norm = log_sum_exp(w);
    std::vector<double> pmf(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) pmf[i] = std::exp(w[i] - norm);
    return pmf;
}

/// First entry (no open servers) of aggregate_level_pmf, same code path so the
/// two agree bit-for-bit.
inline double aggregate_level_blocking(int N, double r, double s) {
    if (N < 1) throw std::invalid_argument("aggregate_level_blocking: N must be >= 1");
    auto w = detail::aggregate_log_weights(N, std::log(r), std::log(s));
    return std::exp(w[0] - log_sum_exp(w));
}

/// Equilibrium distribution of the number of open servers for the timer
/// scheme with N servers and normalized arrival rate lambda.
inline std::vector<double> open_closed_pmf(int N, double lambda, const UpdateLaw& law) {
    if (N < 1) throw std::invalid_argument("open_closed_pmf: N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("open_closed_pmf: lambda must be > 0");
    law.validate();
    const double admissions = expected_admissions(law);
    return aggregate_level_pmf(N, admissions / (lambda * N), law.update_interval);
}

/// Blocking probability of the timer scheme with N servers: the probability
/// that an arrival finds no open server. Equals open_closed_pmf(...)[0].
inline double blocking_finite(int N, double lambda, const UpdateLaw& law) {
    if (N < 1) throw std::invalid_argument("blocking_finite: N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("blocking_finite: lambda must be > 0");
    law.validate();
    const double admissions = expected_admissions(law);
    return aggregate_level_blocking(N, admissions / (lambda * N), law.update_interval);
}

/// Many-server limit of the blocking probability: max{0, 1 - cap / lambda}.
inline double blocking_limit(double lambda, double delta, int K) {
    if (!(lambda > 0.0)) throw std::invalid_argument("blocking_limit: lambda must be > 0");
    const double cap = throughput_bound({delta, K, 1.0});
    return std::max(0.0, 1.0 - cap / lambda);
}

// ---------------------------------------------------------------------------
// Cool-down extension closed forms
// ---------------------------------------------------------------------------

/// Window-outcome probabilities and relative throughputs of the cool-down
/// variant (queue limit 2).
inline ExtensionDerived extension_derived(const ExtensionParams& params) {
    params.validate();
    const double e1 = std::exp(-params.tau1);
    const double e2 = std::exp(-params.tau2);
    const double e3 = std::exp(-params.tau3);

    ExtensionDerived d;
    // Fill window: the first job had tau1 to run, both jobs tau2 more.
    d.remain_after_fill[0] = e1 * (1.0 - params.tau2 * e2 - e2) + (1.0 - e1) * (1.0 - e2);
    d.remain_after_fill[2] = e1 * e2;
    d.remain_after_fill[1] = 1.0 - d.remain_after_fill[0] - d.remain_after_fill[2];
    // Repeat window: both jobs present throughout tau3.
    d.remain_after_repeat[0] = 1.0 - e3 - params.tau3 * e3;
    d.remain_after_repeat[2] = e3;
    d.remain_after_repeat[1] = 1.0 - d.remain_after_repeat[0] - d.remain_after_repeat[2];

    const double escape = 1.0 - d.remain_after_repeat[2];  // > 0 since tau3 > 0
    d.kappa3 = d.remain_after_fill[2] / escape;
    d.gamma1 = d.remain_after_fill[0] + d.remain_after_fill[2] * d.remain_after_repeat[0] / escape;
    d.gamma2 = d.kappa1 = d.kappa2 = 1.0;
    return d;
}

/// Headline metrics of the cool-down variant.
struct ExtensionMetrics {
    double throughput_cap = 0.0;       // many-server throughput limit
    double messages_per_job = 0.0;     // probe exchanges per admitted job
    double mean_queue_position = 0.0;  // expected jobs ahead of an admitted job
};

inline ExtensionMetrics extension_metrics(const ExtensionParams& params) {
    const ExtensionDerived d = extension_derived(params);
    const double admit_rate = d.gamma1 + d.gamma2;
    const double closed_time = d.kappa1 * params.tau1 + d.kappa2 * params.tau2 + d.kappa3 * params.tau3;
    return {admit_rate / closed_time, (d.kappa2 + d.kappa3) / admit_rate, std::exp(-params.tau1) / admit_rate};
}

// ---------------------------------------------------------------------------
// Property suite for the throughput bound
// ---------------------------------------------------------------------------

struct PropertyCheck {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct PropertyReport {
    std::vector<PropertyCheck> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct BoundPropertyTolerances {
    // the limit statements are checked at dedicated extreme points (not at the
    // ends of the monotonicity grid, where adjacent double-precision values
    // saturate and strictness becomes unobservable)
    double saturation_rate = 1e4;     // high-rate evaluation point
    double saturation = 1e-3;         // |1 - bound| there
    double small_rate = 1e-4;         // low-rate evaluation point
    double small_rate_ratio = 1e-3;   // |bound/delta - K| / K there
    double large_limit = 0.02;        // |bound(a/K, K) - a| at large_limit_K
    double large_limit_utilization = 0.8;
    int large_limit_K = 400;
};

/// Grid checks of the bound: strict monotonicity in the message rate and the
/// queue limit, saturation at high rates, K-jobs-per-message behavior at low
/// rates, and the sparse-budget limit in the queue limit. Violations are
/// reported as failing entries, never dropped.
inline PropertyReport bound_property_suite(std::span<const double> rates, std::span<const int> limits,
                                           const BoundPropertyTolerances& tol = {}) {
    if (rates.empty() || limits.empty())
        throw std::invalid_argument("bound_property_suite: grids must be nonempty");
    for (double d : rates)
        if (!(d > 0.0)) throw std::invalid_argument("bound_property_suite: rates must be > 0");
    for (int k : limits)
        if (k < 1) throw std::invalid_argument("bound_property_suite: limits must be >= 1");

    std::vector<double> ds(rates.begin(), rates.end());
    std::vector<int> ks(limits.begin(), limits.end());
    std::sort(ds.begin(), ds.end());
    std::sort(ks.begin(), ks.end());

    PropertyReport report;
    auto add = [&report](std::string name, double residual, double tolerance, bool pass) {
        report.checks.push_back({std::move(name), residual, tolerance, pass});
    };

    // (i) strict monotonicity in the message rate, every limit in the grid
    double min_gap_rate = std::numeric_limits<double>::infinity();
    for (int k : ks)
        for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
            const double gap = throughput_bound({ds[i + 1], k}) - throughput_bound({ds[i], k});
            min_gap_rate = std::min(min_gap_rate, gap);
        }
    add("monotone_in_message_rate(min adjacent gap)", min_gap_rate, 0.0, min_gap_rate > 0.0);

    // (i) strict monotonicity in the queue limit, every rate in the grid
    double min_gap_limit = std::numeric_limits<double>::infinity();
    for (double d : ds)
        for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
            if (ks[i + 1] == ks[i]) continue;
            const double gap = throughput_bound({d, ks[i + 1]}) - throughput_bound({d, ks[i]});
            min_gap_limit = std::min(min_gap_limit, gap);
        }
    if (ks.front() != ks.back())
        add("monotone_in_queue_limit(min adjacent gap)", min_gap_limit, 0.0, min_gap_limit > 0.0);

    // (ii) saturation toward full utilization at high message rates
    for (int k : ks) {
        const double res = std::abs(1.0 - throughput_bound({tol.saturation_rate, k}));
        add("saturates_at_high_rate(K=" + std::to_string(k) + ")", res, tol.saturation, res < tol.saturation);
    }

    // (iii) K admissions per message at vanishing message rates
    for (int k : ks) {
        const double res = std::abs(throughput_bound({tol.small_rate, k}) / tol.small_rate - k);
        add("jobs_per_message_at_low_rate(K=" + std::to_string(k) + ")", res, tol.small_rate_ratio * k,
            res < tol.small_rate_ratio * k);
    }

    // (iv) bound(a/K, K) -> a for large K
    {
        const double a = tol.large_limit_utilization;
        const double res = std::abs(throughput_bound({a / tol.large_limit_K, tol.large_limit_K}) - a);
        add("sparse_budget_limit(K=" + std::to_string(tol.large_limit_K) + ")", res, tol.large_limit,
            res < tol.large_limit);
    }

    return report;
}

}  // namespace qlim
