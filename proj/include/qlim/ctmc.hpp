#pragma once

// Brute-force continuous-time Markov chain oracles for the closed network.
// Infinite-server nodes are treated as exponential with rate 1/mean, which is
// the verification route: the product form is insensitive to the node service
// distribution, checked separately via Erlang stage expansion.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/network.hpp"
#include "qlim/numeric.hpp"
#include "qlim/product_form.hpp"

namespace qlim {

// dense storage and a direct solve put a hard practical ceiling on the
// chain dimension; verification-scale supports stay in the hundreds
inline constexpr std::size_t kGeneratorDimCap = 2'000;

/// Dense rate matrix with zero row sums over an externally defined support.
struct Generator {
    std::size_t dim = 0;
    std::vector<double> rates;  // row-major

    explicit Generator(std::size_t n = 0) : dim(n), rates(n * n, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return rates[i * dim + j]; }
    double at(std::size_t i, std::size_t j) const { return rates[i * dim + j]; }

    void add_rate(std::size_t from, std::size_t to, double rate) {
        if (from == to || rate == 0.0) return;
        at(from, to) += rate;
        at(from, from) -= rate;
    }
};

struct RosGenerator {
    Generator matrix;
    std::vector<std::vector<int>> states;  // compositions, lexicographic
};

struct FcfsGenerator {
    Generator matrix;
    std::vector<OrderedState> states;  // lexicographic on (length, order, occupancy)
};

/// Generator over unordered states with random-order selection at the
/// single-server node: a completing customer is a uniformly chosen one of the
/// a_i present, so class i completes at rate lambdaN * a_i / sum(a).
inline RosGenerator build_generator_ros(const NetworkSpec& spec, std::size_t cap = kGeneratorDimCap) {
    spec.validate();
    RosGenerator out;
    out.states = enumerate_states(spec.customers, spec.units(), cap);
    if (out.states.size() > cap)
        throw std::runtime_error("build_generator_ros: dimension exceeds cap");
    out.matrix = Generator(out.states.size());

    std::vector<int> next;
    auto index_of = [&out](const std::vector<int>& s) {
        const auto it = std::lower_bound(out.states.begin(), out.states.end(), s);
        return static_cast<std::size_t>(it - out.states.begin());
    };

    for (std::size_t si = 0; si < out.states.size(); ++si) {
        const auto& state = out.states[si];
        int at_server = 0;
        for (int i = 0; i < spec.classes; ++i) at_server += state[static_cast<std::size_t>(i)];

        // completions at the single-server node
        if (at_server > 0) {
            for (int i = 0; i < spec.classes; ++i) {
                const int a_i = state[static_cast<std::size_t>(i)];
                if (a_i == 0) continue;
                const double rate = spec.service_rate * a_i / at_server;
                for (int dst = 0; dst < spec.units(); ++dst) {
                    const double p = spec.routing[static_cast<std::size_t>(i)][static_cast<std::size_t>(dst)];
                    if (p == 0.0) continue;
                    next = state;
                    next[static_cast<std::size_t>(i)]--;
                    next[static_cast<std::size_t>(dst)]++;
                    out.matrix.add_rate(si, index_of(next), rate * p);
                }
            }
        }
        // completions at the infinite-server nodes, rate b_j / mean_j
        for (int j = 0; j < spec.nodes; ++j) {
            const int unit = spec.classes + j;
            const int b_j = state[static_cast<std::size_t>(unit)];
            if (b_j == 0) continue;
            const double rate = b_j / spec.node_means[static_cast<std::size_t>(j)];
            for (int dst = 0; dst < spec.units(); ++dst) {
                const double p = spec.routing[static_cast<std::size_t>(unit)][static_cast<std::size_t>(dst)];
                if (p == 0.0) continue;
                next = state;
                next[static_cast<std::size_t>(unit)]--;
                next[static_cast<std::size_t>(dst)]++;
                out.matrix.add_rate(si, index_of(next), rate * p);
            }
        }
    }
    return out;
}

/// Generator over ordered states: the front customer is served, routed
/// customers join at the back of the line.
inline FcfsGenerator build_generator_fcfs(const NetworkSpec& spec, std::size_t cap = kGeneratorDimCap) {
    spec.validate();
    FcfsGenerator out;
    out.states = enumerate_ordered_states(spec.customers, spec.classes, spec.nodes, cap);
    if (out.states.size() > cap)
        throw std::runtime_error("build_generator_fcfs: dimension exceeds cap");
    out.matrix = Generator(out.states.size());

    auto index_of = [&out](const OrderedState& s) {
        const auto it = std::lower_bound(out.states.begin(), out.states.end(), s);
        return static_cast<std::size_t>(it - out.states.begin());
    };

    OrderedState next;
    for (std::size_t si = 0; si < out.states.size(); ++si) {
        const auto& state = out.states[si];

        if (!state.order.empty()) {
            const int front = state.order.front();
            for (int dst = 0; dst < spec.units(); ++dst) {
                const double p = spec.routing[static_cast<std::size_t>(front)][static_cast<std::size_t>(dst)];
                if (p == 0.0) continue;
                next = state;
                next.order.erase(next.order.begin());
                if (spec.is_class(dst)) next.order.push_back(dst);  // rejoins at the back
                else next.occupancy[static_cast<std::size_t>(dst - spec.classes)]++;
                out.matrix.add_rate(si, index_of(next), spec.service_rate * p);
            }
        }
        for (int j = 0; j < spec.nodes; ++j) {
            const int b_j = state.occupancy[static_cast<std::size_t>(j)];
            if (b_j == 0) continue;
            const double rate = b_j / spec.node_means[static_cast<std::size_t>(j)];
            const int unit = spec.classes + j;
            for (int dst = 0; dst < spec.units(); ++dst) {
                const double p = spec.routing[static_cast<std::size_t>(unit)][static_cast<std::size_t>(dst)];
                if (p == 0.0) continue;
                next = state;
                next.occupancy[static_cast<std::size_t>(j)]--;
                if (spec.is_class(dst)) next.order.push_back(dst);
                else next.occupancy[static_cast<std::size_t>(dst - spec.classes)]++;
                out.matrix.add_rate(si, index_of(next), rate * p);
            }
        }
    }
    return out;
}

/// Solves pi Q = 0 with sum(pi) = 1 by a direct dense solve; the residual of
/// the returned vector is below 1e-12 or the call throws.
inline std::vector<double> stationary_from_generator(const Generator& gen) {
    const std::size_t n = gen.dim;
    if (n == 0) throw std::invalid_argument("stationary_from_generator: empty generator");
    // transpose system Q^T pi = 0 with the last equation replaced by sum = 1
    DenseMatrix a(n);
    std::vector<double> b(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a.at(i, j) = gen.at(j, i);
    for (std::size_t j = 0; j < n; ++j) a.at(n - 1, j) = 1.0;
    b[n - 1] = 1.0;
    auto pi = solve_dense(std::move(a), std::move(b));

    double residual = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += pi[i] * gen.at(i, j);
        residual = std::max(residual, std::abs(acc));
    }
    if (residual > 1e-12)
        throw std::runtime_error("stationary_from_generator: residual " + std::to_string(residual) +
                                 " exceeds 1e-12 (reducible or ill-conditioned generator)");
    return pi;
}

// ---------------------------------------------------------------------------
// Insensitivity check via Erlang stages
// ---------------------------------------------------------------------------

struct InsensitivityReport {
    int node = 0;
    std::vector<int> stages;
    std::vector<double> deviation_product_form;  // vs original node marginal
    std::vector<double> deviation_generator;     // expanded CTMC vs original marginal
    double max_deviation = 0.0;
};

/// Expands one node into M exponential stages for each M in `stages`, computes
/// the equilibrium of the expanded network twice (product form and CTMC
/// oracle) and compares the aggregate stage occupancy with the original node
/// marginal. Deviations beyond ~1e-10 indicate a bug; the distribution only
/// depends on the node mean.
inline InsensitivityReport insensitivity_check(const NetworkSpec& spec, int node, std::span<const int> stages,
                                               std::size_t cap = kGeneratorDimCap) {
    const auto base_sol = solve_traffic(spec);
    const auto base_marginal = node_occupancy_marginal(equilibrium_pmf(spec, base_sol, cap), node);

    InsensitivityReport report;
    report.node = node;
    for (int m : stages) {
        const NetworkSpec expanded = erlang_expand(spec, node, m);
        const auto sol = solve_traffic(expanded);
        const auto dist = equilibrium_pmf(expanded, sol, cap);
        const auto pf_marginal = node_occupancy_marginal(dist, node, m);

        const auto gen = build_generator_ros(expanded, cap);
        const auto pi = stationary_from_generator(gen.matrix);
        StateDist gen_dist;
        gen_dist.classes = expanded.classes;
        gen_dist.nodes = expanded.nodes;
        gen_dist.customers = expanded.customers;
        gen_dist.support = gen.states;
        gen_dist.probs = pi;
        const auto gen_marginal = node_occupancy_marginal(gen_dist, node, m);

        double dev_pf = 0.0, dev_gen = 0.0;
        for (std::size_t i = 0; i < base_marginal.size(); ++i) {
            dev_pf = std::max(dev_pf, std::abs(pf_marginal[i] - base_marginal[i]));
            dev_gen = std::max(dev_gen, std::abs(gen_marginal[i] - base_marginal[i]));
        }
        report.stages.push_back(m);
        report.deviation_product_form.push_back(dev_pf);
        report.deviation_generator.push_back(dev_gen);
        report.max_deviation = std::max({report.max_deviation, dev_pf, dev_gen});
    }
    return report;
}

}  // namespace qlim
