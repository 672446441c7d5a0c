#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/rng.hpp"

using namespace qlim;

namespace {

// independent slow route: K - sum_{k<K} (K-k) e^-t t^k / k!
double admissions_alternate_form(int K, double tau) {
    double sum = 0.0;
    double term = std::exp(-tau);
    for (int k = 0; k < K; ++k) {
        sum += (K - k) * term;
        term *= tau / (k + 1);
    }
    return K - sum;
}

// Knuth multiplication method; fine for the small means used here
int poisson_sample(Rng& rng, double mean) {
    const double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform_pos();
    } while (p > limit);
    return k - 1;
}

}  // namespace

TEST_CASE("poisson_cdf closed forms", "[analytic]") {
    CHECK(poisson_cdf(0, 2.5) == Catch::Approx(std::exp(-2.5)).epsilon(1e-14));
    for (int k : {0, 1, 5, 40}) CHECK(poisson_cdf(k, 0.0) == 1.0);
    // 2.5/e, evaluated independently
    CHECK(poisson_cdf(2, 1.0) == Catch::Approx(0.9196986029286058).margin(1e-14));
    CHECK_THROWS_AS(poisson_cdf(-1, 1.0), std::domain_error);
    CHECK_THROWS_AS(poisson_cdf(2, -0.5), std::domain_error);
}

TEST_CASE("poisson_cdf stays sane in extreme regimes", "[analytic]") {
    // far-left tail: positive-ish, tiny, finite
    const double tiny = poisson_cdf(3, 800.0);
    CHECK(tiny >= 0.0);
    CHECK(tiny < 1e-300);
    CHECK(std::isfinite(tiny));
    // monotone in k
    double prev = 0.0;
    for (int k = 0; k <= 6; ++k) {
        const double c = poisson_cdf(k, 3.0);
        CHECK(c >= prev);
        prev = c;
    }
    // near-certain side
    CHECK(poisson_cdf(600, 500.0) > 0.99);
    CHECK(poisson_cdf(600, 500.0) <= 1.0);
}

TEST_CASE("expected_admissions closed forms and bounds", "[analytic]") {
    for (double tau : {0.3, 1.0, 4.0})
        CHECK(expected_admissions({tau, 1}) == Catch::Approx(1.0 - std::exp(-tau)).margin(1e-14));
    // frozen from the alternate form: 2 - 4 e^-2 and 3 - 5.5 e^-1
    CHECK(expected_admissions({2.0, 2}) == Catch::Approx(1.4586588670535492).margin(1e-12));
    CHECK(expected_admissions({1.0, 3}) == Catch::Approx(0.9766630735570672).margin(1e-12));

    for (int K : {1, 2, 3, 5}) {
        for (double tau : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
            const double m = expected_admissions({tau, K});
            CHECK(m > 0.0);
            CHECK(m < K);
            CHECK(m == Catch::Approx(admissions_alternate_form(K, tau)).margin(1e-12));
        }
    }
}

TEST_CASE("expected_admissions is increasing and concave in the interval", "[analytic]") {
    for (int K : {1, 2, 3}) {
        double prev = 0.0;
        std::vector<double> values;
        for (double tau = 0.25; tau <= 8.0 + 1e-9; tau += 0.25) {
            const double m = expected_admissions({tau, K});
            CHECK(m > prev);
            prev = m;
            values.push_back(m);
        }
        for (std::size_t i = 2; i < values.size(); ++i)
            CHECK(values[i] - 2 * values[i - 1] + values[i - 2] < 0.0);
    }
}

TEST_CASE("expected_admissions matches Monte Carlo", "[analytic]") {
    Rng rng(20240817);
    for (const UpdateLaw law : {UpdateLaw{1.0, 2}, UpdateLaw{2.0, 3}}) {
        const int samples = 1'000'000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double v = std::min(law.queue_limit, poisson_sample(rng, law.update_interval));
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / samples;
        const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
        CHECK(std::abs(mean - expected_admissions(law)) < 4.0 * se);
    }
}

TEST_CASE("throughput_bound reference values", "[analytic]") {
    CHECK(throughput_bound({0.5, 2}) == Catch::Approx(0.7293294335267746).margin(1e-12));
    CHECK(throughput_bound({1.0, 2}) == Catch::Approx(0.8963616764856730).margin(1e-12));
    CHECK(throughput_bound({0.2, 2}) == Catch::Approx(0.3905668742012803).margin(1e-12));
    // closed form for limit 2: 2d - 2d e^{-1/d} - e^{-1/d}
    for (double d = 0.1; d <= 5.0 + 1e-9; d += 0.1) {
        const double closed = 2 * d - 2 * d * std::exp(-1 / d) - std::exp(-1 / d);
        CHECK(throughput_bound({d, 2}) == Catch::Approx(closed).margin(1e-12));
    }
    // heterogeneous mean speed enters through the window length
    CHECK(throughput_bound({1.0, 2, 2.0}) == Catch::Approx(1.4586588670535492).margin(1e-12));
    CHECK_THROWS_AS(throughput_bound({-1.0, 2}), std::invalid_argument);
}

TEST_CASE("bound property suite on the standard grids", "[analytic]") {
    // resolvable grid: adjacent gaps stay well above double-precision noise
    std::vector<double> deltas;
    for (int i = 0; i < 100; ++i) deltas.push_back(0.01 * std::pow(2.0 / 0.01, i / 99.0));
    const std::vector<int> limits{1, 2, 3, 5, 10};
    const auto report = bound_property_suite(deltas, limits);
    for (const auto& check : report.checks) {
        INFO(check.name << " residual " << check.residual << " tol " << check.tolerance);
        CHECK(check.pass);
    }
    CHECK(report.all_pass());
}

TEST_CASE("bound property suite reports violations instead of dropping them", "[analytic]") {
    BoundPropertyTolerances impossible;
    impossible.saturation = 1e-18;  // unreachable on this grid
    const std::vector<double> deltas{0.5, 1.0};
    const std::vector<int> limits{2};
    const auto report = bound_property_suite(deltas, limits, impossible);
    CHECK_FALSE(report.all_pass());
    bool found = false;
    for (const auto& check : report.checks)
        if (!check.pass) found = true;
    CHECK(found);
    CHECK_THROWS_AS(bound_property_suite({}, limits), std::invalid_argument);
}

TEST_CASE("update_transition_probs", "[analytic]") {
    const auto p = update_transition_probs({2.0, 2});
    REQUIRE(p.size() == 3);
    CHECK(p[0] == Catch::Approx(0.5939941502901616).margin(1e-12));
    CHECK(p[1] == Catch::Approx(0.2706705664732254).margin(1e-12));
    CHECK(p[2] == Catch::Approx(0.1353352832366127).margin(1e-12));

    for (double tau : {0.2, 1.0, 3.0}) {
        const auto two = update_transition_probs({tau, 1});
        CHECK(two[0] == Catch::Approx(1.0 - std::exp(-tau)).margin(1e-14));
        CHECK(two[1] == Catch::Approx(std::exp(-tau)).margin(1e-14));
    }
    const auto degenerate = update_transition_probs({0.0, 3});
    CHECK(degenerate == std::vector<double>{0.0, 0.0, 0.0, 1.0});

    for (int K : {1, 2, 3, 5})
        for (double tau : {0.1, 1.0, 10.0}) {
            const auto probs = update_transition_probs({tau, K});
            double total = 0.0;
            for (double v : probs) {
                CHECK(v >= 0.0);
                total += v;
            }
            CHECK(total == Catch::Approx(1.0).margin(1e-12));
        }
}

TEST_CASE("open_closed_pmf normalization and edges", "[analytic]") {
    const UpdateLaw law{1.0, 2};
    for (int N : {1, 10, 100, 10000}) {
        const auto pmf = open_closed_pmf(N, 1.2, law);
        REQUIRE(pmf.size() == static_cast<std::size_t>(N) + 1);
        double total = 0.0;
        for (double v : pmf) total += v;
        CHECK(total == Catch::Approx(1.0).margin(1e-10));
    }
    // N = 1 reduces to two point masses with odds x : 1
    const double x = 1.2 * 1.0 / expected_admissions(law);
    const auto two = open_closed_pmf(1, 1.2, law);
    CHECK(two[0] == Catch::Approx(x / (1 + x)).margin(1e-12));
    CHECK(two[1] == Catch::Approx(1 / (1 + x)).margin(1e-12));
    // saturated arrivals: everything closed
    CHECK(open_closed_pmf(50, 1e6, law)[0] == Catch::Approx(1.0).margin(1e-4));
    // stays finite at large N
    const auto big = open_closed_pmf(100000, 1.2, law);
    for (double v : big) REQUIRE(std::isfinite(v));
    // definitional consistency: same code path, bitwise equal
    CHECK(open_closed_pmf(100, 1.2, law)[0] == blocking_finite(100, 1.2, law));
}

namespace {

// independent oracle: loss-system recursion B_n = a B_{n-1} / (n + a B_{n-1})
double erlang_loss_recursion(int N, double offered) {
    double b = 1.0;
    for (int n = 1; n <= N; ++n) b = offered * b / (n + offered * b);
    return b;
}

}  // namespace

TEST_CASE("blocking_finite against the loss recursion", "[analytic]") {
    const UpdateLaw law{1.0, 2};
    const double x = 1.2 / expected_admissions(law);
    for (int N : {1, 5, 50, 500, 5000})
        CHECK(blocking_finite(N, 1.2, law) == Catch::Approx(erlang_loss_recursion(N, x * N)).margin(1e-12));
    CHECK(blocking_finite(1, 1.2, law) == Catch::Approx(x / (1 + x)).margin(1e-12));
    // frozen: overload limit point at N = 1e5
    CHECK(blocking_finite(100000, 1.2, law) == Catch::Approx(0.2530539821416947).margin(1e-9));
}

TEST_CASE("blocking_finite converges monotonically under subcritical load", "[analytic]") {
    const UpdateLaw law{1.0, 2};
    const double lambda = 0.5;  // below the cap 0.8964
    double prev = 1.0;
    for (int N : {10, 100, 1000, 10000, 100000}) {
        const double b = blocking_finite(N, lambda, law);
        CHECK(b <= prev);
        if (b > 0.0) CHECK(b < prev);  // strictly until it underflows
        prev = b;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("blocking_limit", "[analytic]") {
    CHECK(blocking_limit(0.5, 1.0, 2) == 0.0);
    CHECK(blocking_limit(1.2, 1.0, 2) == Catch::Approx(1.0 - 0.8963616764856730 / 1.2).margin(1e-12));
    CHECK(blocking_limit(1e9, 1.0, 2) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("messages_per_admitted_job", "[analytic]") {
    CHECK(messages_per_admitted_job({2.0, 2}) == Catch::Approx(1.0 / 1.4586588670535492).margin(1e-12));
    for (double tau : {0.5, 2.0})
        CHECK(messages_per_admitted_job({tau, 1}) == Catch::Approx(1.0 / (1.0 - std::exp(-tau))).margin(1e-12));
    // long windows approach one message per limit-full batch
    CHECK(messages_per_admitted_job({50.0, 4}) == Catch::Approx(0.25).margin(1e-3));
}

TEST_CASE("extension_derived values and identities", "[analytic]") {
    const auto d = extension_derived({1.0, 1.0, 1.0});
    CHECK(d.remain_after_fill[0] == Catch::Approx(0.4967852755919450).margin(1e-12));
    CHECK(d.remain_after_fill[1] == Catch::Approx(0.3678794411714423).margin(1e-12));
    CHECK(d.remain_after_fill[2] == Catch::Approx(0.1353352832366127).margin(1e-12));
    CHECK(d.remain_after_repeat[0] == Catch::Approx(0.2642411176571153).margin(1e-12));
    CHECK(d.remain_after_repeat[2] == Catch::Approx(0.3678794411714423).margin(1e-12));
    CHECK(d.kappa3 == Catch::Approx(0.2140972656978841).margin(1e-12));
    CHECK(d.gamma1 == Catch::Approx(0.5533585763672863).margin(1e-12));
    CHECK(d.gamma2 == 1.0);
    CHECK(d.kappa1 == 1.0);
    CHECK(d.kappa2 == 1.0);

    for (const ExtensionParams p : {ExtensionParams{0.3, 0.7, 1.3}, ExtensionParams{2.0, 0.5, 0.2}}) {
        const auto v = extension_derived(p);
        CHECK(v.remain_after_fill[0] + v.remain_after_fill[1] + v.remain_after_fill[2] ==
              Catch::Approx(1.0).margin(1e-12));
        CHECK(v.remain_after_repeat[0] + v.remain_after_repeat[1] + v.remain_after_repeat[2] ==
              Catch::Approx(1.0).margin(1e-12));
        for (double q : v.remain_after_fill) CHECK((q >= 0.0 && q <= 1.0));
        for (double q : v.remain_after_repeat) CHECK((q >= 0.0 && q <= 1.0));
    }

    // wide-open windows drain everything
    const auto drained = extension_derived({40.0, 40.0, 1.0});
    CHECK(drained.remain_after_fill[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(drained.remain_after_fill[2] == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(extension_derived({1.0, 1.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(extension_derived({-0.1, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("extension reduction to the single-window scheme", "[analytic]") {
    // zero first window with equal fill/repeat windows reproduces the plain
    // timer closed forms
    for (double tau : {0.5, 1.0, 2.0, 5.0}) {
        const ExtensionParams params{0.0, tau, tau};
        const auto d = extension_derived(params);
        const double m2 = expected_admissions({tau, 2});
        CHECK(d.gamma1 + d.gamma2 == Catch::Approx(m2 / (1.0 - std::exp(-tau))).margin(1e-12));
        const auto m = extension_metrics(params);
        CHECK(m.throughput_cap == Catch::Approx(throughput_bound({1.0 / tau, 2})).margin(1e-12));
        CHECK(m.messages_per_job == Catch::Approx(1.0 / m2).margin(1e-12));
        CHECK(m.mean_queue_position == Catch::Approx(1.0 / (d.gamma1 + d.gamma2)).margin(1e-12));
    }
}

TEST_CASE("extension_metrics reference values", "[analytic]") {
    const auto m = extension_metrics({1.0, 1.0, 1.0});
    CHECK(m.throughput_cap == Catch::Approx(0.7015764846616471).margin(1e-12));
    CHECK(m.messages_per_job == Catch::Approx(0.7815949801733447).margin(1e-12));
    CHECK(m.mean_queue_position == Catch::Approx(0.2368284095947583).margin(1e-12));
}

TEST_CASE("growing the first window trades throughput for queue position", "[analytic]") {
    // with the other windows fixed, a longer first window strictly shortens
    // the queue an admitted job sees and cuts probes per job, at the price of
    // a cap below the single-window scheme's value
    const double single_window_cap = throughput_bound({1.0, 2});
    double prev_cap = extension_metrics({0.0, 1.0, 1.0}).throughput_cap;
    double prev_q = extension_metrics({0.0, 1.0, 1.0}).mean_queue_position;
    double prev_u = extension_metrics({0.0, 1.0, 1.0}).messages_per_job;
    CHECK(prev_cap == Catch::Approx(single_window_cap).margin(1e-12));
    for (double t1 = 0.25; t1 <= 3.0 + 1e-9; t1 += 0.25) {
        const auto m = extension_metrics({t1, 1.0, 1.0});
        CHECK(m.mean_queue_position < prev_q);
        CHECK(m.messages_per_job < prev_u);
        CHECK(m.throughput_cap < prev_cap);
        CHECK(m.throughput_cap < single_window_cap);
        prev_q = m.mean_queue_position;
        prev_u = m.messages_per_job;
        prev_cap = m.throughput_cap;
    }
}
