#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qlim/ctmc.hpp"
#include "qlim/verify.hpp"

using namespace qlim;

TEST_CASE("stationary_from_generator on a two-state toggle", "[ctmc]") {
    Generator gen(2);
    gen.add_rate(0, 1, 3.0);
    gen.add_rate(1, 0, 5.0);
    const auto pi = stationary_from_generator(gen);
    CHECK(pi[0] == Catch::Approx(5.0 / 8.0).margin(1e-14));
    CHECK(pi[1] == Catch::Approx(3.0 / 8.0).margin(1e-14));
}

TEST_CASE("stationary solution follows a relabeling", "[ctmc]") {
    Generator gen(3);
    gen.add_rate(0, 1, 1.0);
    gen.add_rate(1, 2, 2.0);
    gen.add_rate(2, 0, 0.7);
    const auto pi = stationary_from_generator(gen);

    // permute states (0 1 2) -> (2 0 1)
    Generator relabeled(3);
    relabeled.add_rate(2, 0, 1.0);
    relabeled.add_rate(0, 1, 2.0);
    relabeled.add_rate(1, 2, 0.7);
    const auto pi2 = stationary_from_generator(relabeled);
    CHECK(pi2[2] == Catch::Approx(pi[0]).margin(1e-12));
    CHECK(pi2[0] == Catch::Approx(pi[1]).margin(1e-12));
    CHECK(pi2[1] == Catch::Approx(pi[2]).margin(1e-12));
}

TEST_CASE("reducible generator is rejected", "[ctmc]") {
    Generator gen(3);
    gen.add_rate(0, 1, 1.0);
    gen.add_rate(1, 0, 1.0);  // state 2 isolated
    CHECK_THROWS_AS(stationary_from_generator(gen), std::runtime_error);
}

TEST_CASE("random-order generator structure", "[ctmc]") {
    const auto spec = baseline_network(1.0, 2, UpdateLaw{1.0, 2});
    const auto gen = build_generator_ros(spec);
    CHECK(gen.states.size() == 6);  // compositions of 2 customers into 3 units

    // rows sum to zero; the diagonal matches the exit rate net of self-loop
    // routing (the window's still-full branch returns to the same state and
    // cancels inside a generator)
    const double window_self = spec.routing[2][2];
    for (std::size_t i = 0; i < gen.states.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < gen.matrix.dim; ++j) row += gen.matrix.at(i, j);
        CHECK(std::abs(row) < 1e-12);
        const auto& st = gen.states[i];
        const int at_server = st[0] + st[1];
        const double expected_exit = (at_server > 0 ? spec.service_rate : 0.0) +
                                     st[2] / spec.node_means[0] * (1.0 - window_self);
        CHECK(-gen.matrix.at(i, i) == Catch::Approx(expected_exit).margin(1e-12));
    }
}

TEST_CASE("product form solves the random-order chain across the grid", "[ctmc]") {
    for (int K : {1, 2, 3})
        for (int N : {2, 3})
            for (double tau : {0.5, 1.0, 2.0}) {
                const auto spec = baseline_network(1.0, N, UpdateLaw{tau, K});
                const auto sol = solve_traffic(spec);
                const auto dist = equilibrium_pmf(spec, sol);
                const auto gen = build_generator_ros(spec);
                const auto pi = stationary_from_generator(gen.matrix);
                double worst = 0.0;
                for (std::size_t i = 0; i < pi.size(); ++i)
                    worst = std::max(worst, std::abs(pi[i] - dist.probs[i]));
                INFO("K=" << K << " N=" << N << " tau=" << tau);
                CHECK(worst < 1e-10);
            }
}

TEST_CASE("arrival-order generator and its product form", "[ctmc]") {
    const auto spec = baseline_network(1.0, 3, UpdateLaw{1.0, 2});
    const auto sol = solve_traffic(spec);
    const auto gen = build_generator_fcfs(spec);
    CHECK(gen.states.size() == 15);

    const auto ordered = ordered_equilibrium_pmf(spec, sol);
    const auto pi = stationary_from_generator(gen.matrix);
    double worst = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) worst = std::max(worst, std::abs(pi[i] - ordered.probs[i]));
    CHECK(worst < 1e-10);

    // aggregation over orders matches the unordered stationary distribution
    const auto unordered = equilibrium_pmf(spec, sol);
    const auto folded = aggregate_orderings(ordered, unordered);
    const auto pi_ros = stationary_from_generator(build_generator_ros(spec).matrix);
    for (std::size_t i = 0; i < folded.size(); ++i) CHECK(folded[i] == Catch::Approx(pi_ros[i]).margin(1e-10));
}

TEST_CASE("extension network chains agree with the product form", "[ctmc]") {
    for (const ExtensionParams params : {ExtensionParams{1.0, 1.0, 1.0}, ExtensionParams{0.0, 2.0, 2.0}}) {
        const auto spec = extension_network(1.0, 2, params);
        const auto sol = solve_traffic(spec);
        const auto dist = equilibrium_pmf(spec, sol);
        const auto pi = stationary_from_generator(build_generator_ros(spec).matrix);
        double worst = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) worst = std::max(worst, std::abs(pi[i] - dist.probs[i]));
        INFO("tau1=" << params.tau1);
        CHECK(worst < 1e-10);

        const auto ordered = ordered_equilibrium_pmf(spec, sol);
        const auto pi_fcfs = stationary_from_generator(build_generator_fcfs(spec).matrix);
        worst = 0.0;
        for (std::size_t i = 0; i < pi_fcfs.size(); ++i)
            worst = std::max(worst, std::abs(pi_fcfs[i] - ordered.probs[i]));
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("generator cap refusal", "[ctmc]") {
    const auto spec = baseline_network(1.0, 100, UpdateLaw{1.0, 3});
    CHECK_THROWS_AS(build_generator_ros(spec, 50), std::runtime_error);
    CHECK_THROWS_AS(build_generator_fcfs(spec, 50), std::runtime_error);
}

TEST_CASE("insensitivity to the window distribution via stages", "[ctmc]") {
    const int stages[] = {1, 2, 4};
    const auto spec = baseline_network(1.0, 2, UpdateLaw{1.0, 2});
    const auto report = insensitivity_check(spec, 0, stages);
    CHECK(report.max_deviation < 1e-10);
    CHECK(report.deviation_product_form.front() == 0.0);  // single stage rebuilds the identical network

    const auto ext = extension_network(1.0, 2, ExtensionParams{1.0, 1.0, 1.0});
    CHECK(insensitivity_check(ext, 2, stages).max_deviation < 1e-10);
}

TEST_CASE("full verification suite passes", "[ctmc][verify]") {
    const auto report = run_verification();
    for (const auto& e : report.entries) {
        INFO(e.name << " residual " << e.residual);
        CHECK(e.pass);
    }
    CHECK(report.max_residual < 1e-8);
}
