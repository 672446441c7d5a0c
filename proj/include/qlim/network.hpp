#pragma once

// Closed queueing network with one multi-class single-server node and B
// infinite-server nodes; servers of the dispatching system circulate through
// it as customers. Traffic equations give relative throughputs up to scale.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/numeric.hpp"

namespace qlim {

/// Unit indexing: 0..classes-1 are classes at the single-server node,
/// classes..classes+nodes-1 are the infinite-server nodes.
struct NetworkSpec {
    int classes = 1;  // A
    int nodes = 1;    // B
    std::vector<std::vector<double>> routing;  // (A+B) x (A+B), rows sum to 1
    double service_rate = 1.0;                 // completion rate at the single-server node (lambda * N)
    std::vector<double> node_means;            // mean sojourn per infinite-server node
    int customers = 1;                         // N

    int units() const { return classes + nodes; }
    bool is_class(int unit) const { return unit < classes; }

    std::string unit_name(int unit) const {
        return (is_class(unit) ? "A" : "B") + std::to_string(is_class(unit) ? unit + 1 : unit - classes + 1);
    }

    void validate() const {
        if (classes < 1 || nodes < 1) throw std::invalid_argument("NetworkSpec: need classes >= 1 and nodes >= 1");
        if (customers < 1) throw std::invalid_argument("NetworkSpec: customers must be >= 1");
        if (!(service_rate > 0.0)) throw std::invalid_argument("NetworkSpec: service_rate must be > 0");
        if (static_cast<int>(node_means.size()) != nodes)
            throw std::invalid_argument("NetworkSpec: node_means size mismatch");
        for (double m : node_means)
            if (!(m > 0.0)) throw std::invalid_argument("NetworkSpec: node means must be > 0");
        if (static_cast<int>(routing.size()) != units())
            throw std::invalid_argument("NetworkSpec: routing must be (A+B) x (A+B)");
        for (int i = 0; i < units(); ++i) {
            if (static_cast<int>(routing[i].size()) != units())
                throw std::invalid_argument("NetworkSpec: routing must be (A+B) x (A+B)");
            double row = 0.0;
            for (double p : routing[i]) {
                if (p < 0.0) throw std::invalid_argument("NetworkSpec: negative routing probability");
                row += p;
            }
            if (std::abs(row - 1.0) > 1e-12)
                throw std::invalid_argument("NetworkSpec: routing row " + unit_name(i) + " sums to " +
                                            std::to_string(row));
        }
    }
};

/// Relative throughputs solving the traffic equations; node_rates[0] == 1 by
/// convention (for the timer scheme this coincides with pinning the closed
/// class to 1).
struct ThroughputSolution {
    std::vector<double> class_rates;  // gamma_i per class
    std::vector<double> node_rates;   // kappa_j per node

    double total_class_rate() const {
        double s = 0.0;
        for (double g : class_rates) s += g;
        return s;
    }

    double total_node_mean(const NetworkSpec& spec) const {
        double s = 0.0;
        for (std::size_t j = 0; j < node_rates.size(); ++j) s += node_rates[j] * spec.node_means[j];
        return s;
    }
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Network of the timer scheme: classes 0..K-1 are open states, the single
/// infinite-server node is the closed window. A dispatch bumps the class; the
/// window routes back by the number of jobs left.
inline NetworkSpec baseline_network(double lambda, int N, const UpdateLaw& law) {
    law.validate();
    if (N < 1) throw std::invalid_argument("baseline_network: N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("baseline_network: lambda must be > 0");
    const int K = law.queue_limit;
    NetworkSpec spec;
    spec.classes = K;
    spec.nodes = 1;
    spec.customers = N;
    spec.service_rate = lambda * N;
    spec.node_means = {law.update_interval};
    spec.routing.assign(static_cast<std::size_t>(K) + 1, std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));
    for (int k = 0; k + 1 < K; ++k) spec.routing[k][k + 1] = 1.0;  // next job raises the state
    spec.routing[K - 1][K] = 1.0;                                  // last admission closes the server
    const auto p = update_transition_probs(law);
    for (int k = 0; k < K; ++k) spec.routing[K][k] = p[static_cast<std::size_t>(k)];
    spec.routing[K][K] = p[static_cast<std::size_t>(K)];  // still full: straight into the next window
    spec.validate();
    return spec;
}

/// Network of the cool-down variant: two open classes (idle, one-job) and
/// three windows (first job, fill, repeat). A zero first-job window collapses
/// node B1 into direct class routing A1 -> A2 at the single-server node.
inline NetworkSpec extension_network(double lambda, int N, const ExtensionParams& params) {
    const ExtensionDerived d = extension_derived(params);
    if (N < 1) throw std::invalid_argument("extension_network: N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("extension_network: lambda must be > 0");
    NetworkSpec spec;
    spec.classes = 2;  // A1 idle-open, A2 half-open
    spec.customers = N;
    spec.service_rate = lambda * N;
    if (params.tau1 > 0.0) {
        spec.nodes = 3;  // B1 first-job window, B2 fill window, B3 repeat window
        spec.node_means = {params.tau1, params.tau2, params.tau3};
        spec.routing.assign(5, std::vector<double>(5, 0.0));
        const int A1 = 0, A2 = 1, B1 = 2, B2 = 3, B3 = 4;
        spec.routing[A1][B1] = 1.0;
        spec.routing[B1][A2] = 1.0;
        spec.routing[A2][B2] = 1.0;
        spec.routing[B2][A1] = d.remain_after_fill[0];
        spec.routing[B2][B1] = d.remain_after_fill[1];
        spec.routing[B2][B3] = d.remain_after_fill[2];
        spec.routing[B3][A1] = d.remain_after_repeat[0];
        spec.routing[B3][B1] = d.remain_after_repeat[1];
        spec.routing[B3][B3] = d.remain_after_repeat[2];
    } else {
        spec.nodes = 2;  // B2 fill window, B3 repeat window
        spec.node_means = {params.tau2, params.tau3};
        spec.routing.assign(4, std::vector<double>(4, 0.0));
        const int A1 = 0, A2 = 1, B2 = 2, B3 = 3;
        spec.routing[A1][A2] = 1.0;  // first job instantly half-opens the server
        spec.routing[A2][B2] = 1.0;
        spec.routing[B2][A1] = d.remain_after_fill[0];
        spec.routing[B2][A2] = d.remain_after_fill[1];
        spec.routing[B2][B3] = d.remain_after_fill[2];
        spec.routing[B3][A1] = d.remain_after_repeat[0];
        spec.routing[B3][A2] = d.remain_after_repeat[1];
        spec.routing[B3][B3] = d.remain_after_repeat[2];
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Traffic equations
// ---------------------------------------------------------------------------

namespace detail {

/// Strong-connectivity check of the routing graph; returns the first unit not
/// on a cycle with unit 0, or -1 when irreducible.
inline int find_unreachable_unit(const NetworkSpec& spec) {
    const int n = spec.units();
    auto reach = [&](bool forward) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v = 0; v < n; ++v) {
                const double p = forward ? spec.routing[u][v] : spec.routing[v][u];
                if (p > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        return seen;
    };
    const auto fwd = reach(true);
    const auto bwd = reach(false);
    for (int u = 0; u < n; ++u)
        if (!fwd[u] || !bwd[u]) return u;
    return -1;
}

}  // namespace detail

inline double traffic_residual(const NetworkSpec& spec, const ThroughputSolution& sol) {
    const int n = spec.units();
    auto rate = [&](int u) {
        return u < spec.classes ? sol.class_rates[static_cast<std::size_t>(u)]
                                : sol.node_rates[static_cast<std::size_t>(u - spec.classes)];
    };
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        double inflow = 0.0;
        for (int j = 0; j < n; ++j) inflow += spec.routing[j][i] * rate(j);
        worst = std::max(worst, std::abs(inflow - rate(i)));
    }
    return worst;
}

/// Solves the traffic equations y_i = sum_j P_{j->i} y_j with the first node's
/// rate pinned to 1. Throws when the routing graph is not irreducible, naming
/// the offending class or node.
inline ThroughputSolution solve_traffic(const NetworkSpec& spec) {
    spec.validate();
    const int bad = detail::find_unreachable_unit(spec);
    if (bad >= 0)
        throw std::runtime_error("solve_traffic: routing is reducible; unit " + spec.unit_name(bad) +
                                 " is not on a common cycle");
    const int n = spec.units();
    const int pin = spec.classes;  // first infinite-server node
    DenseMatrix a(static_cast<std::size_t>(n));
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        if (i == pin) {
            a.at(i, i) = 1.0;
            b[static_cast<std::size_t>(i)] = 1.0;
            continue;
        }
        for (int j = 0; j < n; ++j) a.at(i, j) = spec.routing[j][i] - (i == j ? 1.0 : 0.0);
    }
    auto y = solve_dense(std::move(a), std::move(b));

    ThroughputSolution sol;
    sol.class_rates.assign(y.begin(), y.begin() + spec.classes);
    sol.node_rates.assign(y.begin() + spec.classes, y.end());
    for (double v : y)
        if (!(v > 0.0)) throw std::runtime_error("solve_traffic: non-positive throughput in solution");
    const double res = traffic_residual(spec, sol);
    if (res > 1e-12) throw std::runtime_error("solve_traffic: residual " + std::to_string(res) + " exceeds 1e-12");
    return sol;
}

// ---------------------------------------------------------------------------
// Erlang stage expansion
// ---------------------------------------------------------------------------

/// Replaces one infinite-server node by `stages` serial nodes of mean
/// tau/stages each: inbound edges land on stage 1, stage i feeds stage i+1,
/// stage M inherits the outbound row. The aggregate stage occupancy matches
/// the original node's occupancy exactly, which is the insensitivity route.
inline NetworkSpec erlang_expand(const NetworkSpec& spec, int node, int stages) {
    spec.validate();
    if (node < 0 || node >= spec.nodes) throw std::invalid_argument("erlang_expand: node index out of range");
    if (stages < 1) throw std::invalid_argument("erlang_expand: stages must be >= 1");
    const int A = spec.classes;
    const int target = A + node;  // unit index of the expanded node
    const int extra = stages - 1;
    const int n_old = spec.units();
    const int n_new = n_old + extra;

    // old unit -> new unit; stages occupy target..target+extra in sequence
    auto remap = [&](int u) { return u <= target ? u : u + extra; };

    NetworkSpec out;
    out.classes = A;
    out.nodes = spec.nodes + extra;
    out.customers = spec.customers;
    out.service_rate = spec.service_rate;
    out.node_means.assign(static_cast<std::size_t>(out.nodes), 0.0);
    for (int j = 0; j < spec.nodes; ++j) {
        const int nu = remap(A + j) - A;
        out.node_means[static_cast<std::size_t>(nu)] = spec.node_means[static_cast<std::size_t>(j)];
    }
    for (int s = 0; s < stages; ++s)
        out.node_means[static_cast<std::size_t>(node + s)] = spec.node_means[static_cast<std::size_t>(node)] / stages;

    out.routing.assign(static_cast<std::size_t>(n_new), std::vector<double>(static_cast<std::size_t>(n_new), 0.0));
    for (int i = 0; i < n_old; ++i) {
        const int src = i == target ? target + extra : remap(i);  // outbound row moves to the last stage
        for (int j = 0; j < n_old; ++j) {
            const double p = spec.routing[i][j];
            if (p == 0.0) continue;
            out.routing[static_cast<std::size_t>(src)][static_cast<std::size_t>(remap(j))] += p;
        }
    }
    for (int s = 0; s + 1 < stages; ++s)
        out.routing[static_cast<std::size_t>(target + s)][static_cast<std::size_t>(target + s + 1)] = 1.0;
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Config-format serialization (same key-value format the CLI uses)
// ---------------------------------------------------------------------------

inline std::string to_config(const NetworkSpec& spec) {
    spec.validate();
    std::ostringstream out;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << "classes = " << spec.classes << "\n";
    out << "nodes = " << spec.nodes << "\n";
    out << "customers = " << spec.customers << "\n";
    out << "service_rate = " << num(spec.service_rate) << "\n";
    out << "node_means = ";
    for (int j = 0; j < spec.nodes; ++j) out << (j ? "," : "") << num(spec.node_means[static_cast<std::size_t>(j)]);
    out << "\n";
    for (int i = 0; i < spec.units(); ++i) {
        out << "route " << spec.unit_name(i) << " = ";
        bool first = true;
        for (int j = 0; j < spec.units(); ++j) {
            const double p = spec.routing[i][j];
            if (p == 0.0) continue;
            out << (first ? "" : ",") << spec.unit_name(j) << ":" << num(p);
            first = false;
        }
        out << "\n";
    }
    return out.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
    return parts;
}

}  // namespace detail

inline NetworkSpec network_from_config(std::istream& in) {
    NetworkSpec spec;
    spec.classes = 0;
    spec.nodes = 0;
    spec.node_means.clear();
    std::vector<std::pair<std::string, std::string>> routes;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("network config: expected key = value, got: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "classes") spec.classes = std::stoi(value);
        else if (key == "nodes") spec.nodes = std::stoi(value);
        else if (key == "customers") spec.customers = std::stoi(value);
        else if (key == "service_rate") spec.service_rate = std::stod(value);
        else if (key == "node_means") {
            for (const auto& tok : detail::split(value, ',')) spec.node_means.push_back(std::stod(tok));
        } else if (key.rfind("route ", 0) == 0) {
            routes.emplace_back(detail::trim(key.substr(6)), value);
        } else {
            throw std::runtime_error("network config: unknown key: " + key);
        }
    }
    if (spec.classes < 1 || spec.nodes < 1) throw std::runtime_error("network config: classes/nodes missing");
    auto unit_index = [&spec](const std::string& name) {
        if (name.size() < 2 || (name[0] != 'A' && name[0] != 'B'))
            throw std::runtime_error("network config: bad unit name: " + name);
        const int idx = std::stoi(name.substr(1)) - 1;
        const int unit = name[0] == 'A' ? idx : spec.classes + idx;
        if (idx < 0 || unit >= spec.units()) throw std::runtime_error("network config: unit out of range: " + name);
        return unit;
    };
    spec.routing.assign(static_cast<std::size_t>(spec.units()),
                        std::vector<double>(static_cast<std::size_t>(spec.units()), 0.0));
    for (const auto& [name, value] : routes) {
        const int src = unit_index(name);
        for (const auto& tok : detail::split(value, ',')) {
            const auto colon = tok.rfind(':');
            if (colon == std::string::npos) throw std::runtime_error("network config: bad route entry: " + tok);
            const int dst = unit_index(detail::trim(tok.substr(0, colon)));
            spec.routing[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)] =
                std::stod(tok.substr(colon + 1));
        }
    }
    spec.validate();
    return spec;
}

inline NetworkSpec network_from_config(const std::string& text) {
    std::istringstream in(text);
    return network_from_config(in);
}

}  // namespace qlim
