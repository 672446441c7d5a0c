#pragma once

// Product-form equilibrium of the closed network, evaluated by direct
// enumeration of the state space (verification scale). States are weighted in
// log domain and normalized by log-sum-exp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/network.hpp"
#include "qlim/numeric.hpp"

namespace qlim {

inline constexpr std::size_t kDefaultStateCap = 10'000'000;

/// Unordered equilibrium: support holds every composition (n_1..n_A, m_1..m_B)
/// of N customers in lexicographic order.
struct StateDist {
    int classes = 0;
    int nodes = 0;
    int customers = 0;
    std::vector<std::vector<int>> support;
    std::vector<double> probs;
    double log_normalizer = 0.0;  // log of the product-form normalization constant

    std::size_t index_of(const std::vector<int>& state) const {
        const auto it = std::lower_bound(support.begin(), support.end(), state);
        if (it == support.end() || *it != state) throw std::out_of_range("StateDist: state not in support");
        return static_cast<std::size_t>(it - support.begin());
    }
};

namespace detail {

inline void enumerate_compositions(int total, int bins, std::vector<int>& scratch,
                                   std::vector<std::vector<int>>& out) {
    const int filled = static_cast<int>(scratch.size());
    if (filled == bins - 1) {
        scratch.push_back(total);
        out.push_back(scratch);
        scratch.pop_back();
        return;
    }
    for (int v = 0; v <= total; ++v) {
        scratch.push_back(v);
        enumerate_compositions(total - v, bins, scratch, out);
        scratch.pop_back();
    }
}

}  // namespace detail

/// All compositions of `total` customers over `bins` units, lexicographic.
inline std::vector<std::vector<int>> enumerate_states(int total, int bins, std::size_t cap = kDefaultStateCap) {
    const std::size_t count = composition_count(total, bins);
    if (count > cap)
        throw std::runtime_error("state space too large: " + std::to_string(count) + " states exceeds cap " +
                                 std::to_string(cap));
    std::vector<std::vector<int>> out;
    out.reserve(count);
    std::vector<int> scratch;
    detail::enumerate_compositions(total, bins, scratch, out);
    return out;
}

namespace detail {

// log of the unnormalized product-form weight of one state
inline double state_log_weight(const NetworkSpec& spec, const ThroughputSolution& sol,
                               const std::vector<int>& state) {
    const double log_rate = std::log(spec.service_rate);
    int at_server = 0;
    double w = 0.0;
    for (int i = 0; i < spec.classes; ++i) {
        const int n = state[static_cast<std::size_t>(i)];
        at_server += n;
        w += n * (std::log(sol.class_rates[static_cast<std::size_t>(i)]) - log_rate) - log_gamma(n + 1.0);
    }
    w += log_gamma(at_server + 1.0);  // multinomial ordering factor
    for (int j = 0; j < spec.nodes; ++j) {
        const int m = state[static_cast<std::size_t>(spec.classes + j)];
        w += m * std::log(sol.node_rates[static_cast<std::size_t>(j)] * spec.node_means[static_cast<std::size_t>(j)]) -
             log_gamma(m + 1.0);
    }
    return w;
}

}  // namespace detail

/// Product-form equilibrium over the full unordered support. Invariant to the
/// scale of the throughput solution.
inline StateDist equilibrium_pmf(const NetworkSpec& spec, const ThroughputSolution& sol,
                                 std::size_t cap = kDefaultStateCap) {
    spec.validate();
    StateDist dist;
    dist.classes = spec.classes;
    dist.nodes = spec.nodes;
    dist.customers = spec.customers;
    dist.support = enumerate_states(spec.customers, spec.units(), cap);
    std::vector<double> logw(dist.support.size());
    for (std::size_t s = 0; s < dist.support.size(); ++s)
        logw[s] = detail::state_log_weight(spec, sol, dist.support[s]);
    dist.log_normalizer = log_sum_exp(logw);
    dist.probs.resize(logw.size());
    for (std::size_t s = 0; s < logw.size(); ++s) dist.probs[s] = std::exp(logw[s] - dist.log_normalizer);
    return dist;
}

/// Aggregates the equilibrium by the number of customers at the single-server
/// node (open servers): vector over n = 0..N.
inline std::vector<double> aggregate_open_closed(const StateDist& dist) {
    std::vector<double> agg(static_cast<std::size_t>(dist.customers) + 1, 0.0);
    for (std::size_t s = 0; s < dist.support.size(); ++s) {
        int at_server = 0;
        for (int i = 0; i < dist.classes; ++i) at_server += dist.support[s][static_cast<std::size_t>(i)];
        agg[static_cast<std::size_t>(at_server)] += dist.probs[s];
    }
    return agg;
}

/// Marginal occupancy distribution of one infinite-server node (vector over
/// 0..N). For a stage-expanded network pass the stage range instead.
inline std::vector<double> node_occupancy_marginal(const StateDist& dist, int first_node, int node_count = 1) {
    if (first_node < 0 || first_node + node_count > dist.nodes)
        throw std::invalid_argument("node_occupancy_marginal: node range out of bounds");
    std::vector<double> marginal(static_cast<std::size_t>(dist.customers) + 1, 0.0);
    for (std::size_t s = 0; s < dist.support.size(); ++s) {
        int occ = 0;
        for (int j = 0; j < node_count; ++j)
            occ += dist.support[s][static_cast<std::size_t>(dist.classes + first_node + j)];
        marginal[static_cast<std::size_t>(occ)] += dist.probs[s];
    }
    return marginal;
}

/// Many-customer blocking limit max{0, 1 - R/lambda} with R the ratio of
/// aggregate class throughput to aggregate node mean load.
inline double limit_blocking(const NetworkSpec& spec, const ThroughputSolution& sol, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("limit_blocking: lambda must be > 0");
    const double r = sol.total_class_rate() / sol.total_node_mean(spec);
    return std::max(0.0, 1.0 - r / lambda);
}

// ---------------------------------------------------------------------------
// Ordered states (arrival-order-aware service at the single-server node)
// ---------------------------------------------------------------------------

/// State (c, b): c is the class of each customer at the single-server node in
/// arrival order (front served first), b the node occupancies. Support is
/// lexicographic on (length of c, c, b).
struct OrderedState {
    std::vector<int> order;      // classes, front first
    std::vector<int> occupancy;  // per infinite-server node

    bool operator==(const OrderedState&) const = default;
    bool operator<(const OrderedState& other) const {
        if (order.size() != other.order.size()) return order.size() < other.order.size();
        if (order != other.order) return order < other.order;
        return occupancy < other.occupancy;
    }
};

struct OrderedStateDist {
    int classes = 0;
    int nodes = 0;
    int customers = 0;
    std::vector<OrderedState> support;
    std::vector<double> probs;

    std::size_t index_of(const OrderedState& state) const {
        const auto it = std::lower_bound(support.begin(), support.end(), state);
        if (it == support.end() || !(*it == state)) throw std::out_of_range("OrderedStateDist: state not in support");
        return static_cast<std::size_t>(it - support.begin());
    }
};

/// Count of ordered states: sum over m of A^m * compositions(N - m, B).
inline std::size_t ordered_support_size(int total, int classes, int nodes) {
    std::size_t count = 0;
    std::size_t seqs = 1;
    for (int m = 0; m <= total; ++m) {
        count += seqs * composition_count(total - m, nodes);
        seqs *= static_cast<std::size_t>(classes);
    }
    return count;
}

inline std::vector<OrderedState> enumerate_ordered_states(int total, int classes, int nodes,
                                                          std::size_t cap = kDefaultStateCap) {
    const std::size_t count = ordered_support_size(total, classes, nodes);
    if (count > cap)
        throw std::runtime_error("ordered state space too large: " + std::to_string(count) +
                                 " states exceeds cap " + std::to_string(cap));
    std::vector<OrderedState> out;
    out.reserve(count);
    std::vector<int> seq;
    auto recurse = [&](auto&& self, int m) -> void {
        if (static_cast<int>(seq.size()) == m) {
            std::vector<int> scratch;
            std::vector<std::vector<int>> occs;
            detail::enumerate_compositions(total - m, nodes, scratch, occs);
            for (auto& b : occs) out.push_back({seq, std::move(b)});
            return;
        }
        for (int cls = 0; cls < classes; ++cls) {
            seq.push_back(cls);
            self(self, m);
            seq.pop_back();
        }
    };
    for (int m = 0; m <= total; ++m) recurse(recurse, m);
    return out;
}

/// Equilibrium over ordered states: weight per state is the product of the
/// per-customer class factors and the node factors (no multinomial term).
inline OrderedStateDist ordered_equilibrium_pmf(const NetworkSpec& spec, const ThroughputSolution& sol,
                                                std::size_t cap = kDefaultStateCap) {
    spec.validate();
    OrderedStateDist dist;
    dist.classes = spec.classes;
    dist.nodes = spec.nodes;
    dist.customers = spec.customers;
    dist.support = enumerate_ordered_states(spec.customers, spec.classes, spec.nodes, cap);
    const double log_rate = std::log(spec.service_rate);
    std::vector<double> logw(dist.support.size());
    for (std::size_t s = 0; s < dist.support.size(); ++s) {
        const auto& st = dist.support[s];
        double w = 0.0;
        for (int cls : st.order) w += std::log(sol.class_rates[static_cast<std::size_t>(cls)]) - log_rate;
        for (int j = 0; j < spec.nodes; ++j) {
            const int m = st.occupancy[static_cast<std::size_t>(j)];
            w += m * std::log(sol.node_rates[static_cast<std::size_t>(j)] *
                              spec.node_means[static_cast<std::size_t>(j)]) -
                 log_gamma(m + 1.0);
        }
        logw[s] = w;
    }
    const double norm = log_sum_exp(logw);
    dist.probs.resize(logw.size());
    for (std::size_t s = 0; s < logw.size(); ++s) dist.probs[s] = std::exp(logw[s] - norm);
    return dist;
}

/// Sums ordered-state probabilities over all orders with the same class
/// counts; the result is aligned with the unordered support.
inline std::vector<double> aggregate_orderings(const OrderedStateDist& ordered, const StateDist& shape) {
    std::vector<double> agg(shape.support.size(), 0.0);
    std::vector<int> key(static_cast<std::size_t>(shape.classes + shape.nodes), 0);
    for (std::size_t s = 0; s < ordered.support.size(); ++s) {
        const auto& st = ordered.support[s];
        std::fill(key.begin(), key.end(), 0);
        for (int cls : st.order) key[static_cast<std::size_t>(cls)]++;
        for (int j = 0; j < shape.nodes; ++j)
            key[static_cast<std::size_t>(shape.classes + j)] = st.occupancy[static_cast<std::size_t>(j)];
        agg[shape.index_of(key)] += ordered.probs[s];
    }
    return agg;
}

}  // namespace qlim
