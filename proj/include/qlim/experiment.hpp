#pragma once

// Experiment descriptions, the key-value config format, CSV emission and the
// sweep runners behind the command-line tool. One experiment per config file;
// presets are plain config files. CSV values carry 9 significant digits and
// LF line endings so reproduced outputs diff cleanly.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/simulation.hpp"
#include "qlim/verify.hpp"

namespace qlim {

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

/// Formats with 9 significant digits; NaN becomes an empty cell.
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Runs fn(0..count-1) on up to `jobs` threads (0 = hardware concurrency).
/// Results must be written to preallocated slots; iteration order within a
/// thread is ascending, so output assembled by index stays deterministic.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Experiment description
// ---------------------------------------------------------------------------

enum class ExperimentMode { bound, pmf, simulate, sweep, verify, extension };

struct ExperimentSpec {
    ExperimentMode mode = ExperimentMode::simulate;

    // output
    std::string output;  // empty = stdout
    int jobs = 0;

    // analytic bound grids
    std::vector<double> deltas;
    std::vector<int> k_list;
    std::vector<double> utilization_curves;  // curves delta -> bound(delta, a/delta), integer K only

    // shared model parameters
    int queue_limit = 2;
    int servers = 100;
    double lambda = 1.2;
    double tau = 1.0;

    // simulation
    std::vector<SchemeKind> schemes{SchemeKind::baseline};
    Selection selection = Selection::random_open;
    ServiceSpec service;
    AujsqPhasing phasing = AujsqPhasing::staggered;
    std::vector<double> tau_grid;
    std::vector<double> lambda_grid;
    double horizon = 1e4;
    double warmup = 0.2;
    double sample_interval = 0.0;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    // cool-down extension parameters
    double tau1 = 0.0, tau2 = 1.0, tau3 = 1.0;
    std::vector<double> tau1_grid;
    std::vector<std::array<double, 3>> tau_triples;

    // optional event-log dump (simulate mode; one file per seed)
    std::string trace_path;

    // verification
    std::size_t state_cap = kGeneratorDimCap;
};

// ---------------------------------------------------------------------------
// Config-file parsing
// ---------------------------------------------------------------------------

namespace cfgdetail {

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
    while (std::getline(in, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) parts.push_back(cur);
    }
    return parts;
}

inline double to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: not a number: '" + s + "'");
    }
}

inline int to_int(const std::string& s) {
    const double v = to_double(s);
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-9) throw ConfigError("config: not an integer: '" + s + "'");
    return i;
}

/// "a:b:step" inclusive range (1e-9 end slack) or a comma list.
inline std::vector<double> parse_grid(const std::string& text) {
    const auto range = split(text, ':');
    if (range.size() == 3 && text.find(',') == std::string::npos) {
        const double a = to_double(range[0]);
        const double b = to_double(range[1]);
        const double step = to_double(range[2]);
        if (!(step > 0.0) || b < a) throw ConfigError("config: bad range '" + text + "'");
        std::vector<double> out;
        for (int i = 0;; ++i) {
            const double v = a + i * step;
            if (v > b + 1e-9) break;
            out.push_back(v);
        }
        return out;
    }
    std::vector<double> out;
    for (const auto& tok : split(text, ',')) out.push_back(to_double(tok));
    if (out.empty()) throw ConfigError("config: empty grid '" + text + "'");
    return out;
}

inline SchemeKind parse_scheme(const std::string& s) {
    if (s == "baseline") return SchemeKind::baseline;
    if (s == "non_idling") return SchemeKind::non_idling;
    if (s == "work_conserving") return SchemeKind::work_conserving;
    if (s == "aujsq") return SchemeKind::aujsq;
    if (s == "extension") return SchemeKind::extension;
    throw ConfigError("config: unknown scheme '" + s + "'");
}

inline ServiceSpec parse_service(const std::string& s) {
    ServiceSpec svc;
    if (s == "exponential") return svc;
    const auto parts = split(s, ':');
    if (parts.size() == 3 && parts[0] == "gamma") {
        svc.kind = ServiceSpec::Kind::gamma;
        svc.gamma_shape = to_double(parts[1]);
        svc.gamma_rate = to_double(parts[2]);
        return svc;
    }
    throw ConfigError("config: unknown service '" + s + "' (use exponential or gamma:shape:rate)");
}

}  // namespace cfgdetail

/// Applies one key = value assignment (config line or CLI override).
inline void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
    using namespace cfgdetail;
    if (key == "mode") {
        static const std::map<std::string, ExperimentMode> modes{
            {"bound", ExperimentMode::bound},       {"pmf", ExperimentMode::pmf},
            {"simulate", ExperimentMode::simulate}, {"sweep", ExperimentMode::sweep},
            {"verify", ExperimentMode::verify},     {"extension", ExperimentMode::extension}};
        const auto it = modes.find(value);
        if (it == modes.end()) throw ConfigError("config: unknown mode '" + value + "'");
        spec.mode = it->second;
    } else if (key == "output") spec.output = value;
    else if (key == "jobs") spec.jobs = to_int(value);
    else if (key == "deltas") spec.deltas = parse_grid(value);
    else if (key == "K_list") {
        spec.k_list.clear();
        for (double v : parse_grid(value)) spec.k_list.push_back(static_cast<int>(v));
    } else if (key == "utilization_curves") spec.utilization_curves = parse_grid(value);
    else if (key == "K") spec.queue_limit = to_int(value);
    else if (key == "N") spec.servers = to_int(value);
    else if (key == "lambda") spec.lambda = to_double(value);
    else if (key == "tau") spec.tau = to_double(value);
    else if (key == "scheme") {
        spec.schemes.clear();
        for (const auto& tok : split(value, ',')) spec.schemes.push_back(parse_scheme(tok));
        if (spec.schemes.empty()) throw ConfigError("config: empty scheme list");
    } else if (key == "selection") {
        if (value == "random") spec.selection = Selection::random_open;
        else if (value == "fcfs") spec.selection = Selection::fcfs_open;
        else throw ConfigError("config: unknown selection '" + value + "'");
    } else if (key == "service") spec.service = parse_service(value);
    else if (key == "speeds") {
        spec.service.speeds.clear();
        for (double v : parse_grid(value)) spec.service.speeds.push_back(v);
    } else if (key == "aujsq_phasing") {
        if (value == "synchronized") spec.phasing = AujsqPhasing::synchronized;
        else if (value == "staggered") spec.phasing = AujsqPhasing::staggered;
        else if (value == "random") spec.phasing = AujsqPhasing::random_phase;
        else throw ConfigError("config: unknown aujsq_phasing '" + value + "'");
    } else if (key == "tau_grid") spec.tau_grid = parse_grid(value);
    else if (key == "lambda_grid") spec.lambda_grid = parse_grid(value);
    else if (key == "horizon") spec.horizon = to_double(value);
    else if (key == "warmup") spec.warmup = to_double(value);
    else if (key == "sample_interval") spec.sample_interval = to_double(value);
    else if (key == "seed") spec.seeds.push_back(static_cast<std::uint64_t>(to_int(value)));
    else if (key == "seeds") {
        spec.seeds.clear();
        const auto parts = split(value, ',');
        if (parts.size() == 1 && value.find(',') == std::string::npos) {
            const int count = to_int(parts[0]);  // bare count: seeds 1..count
            if (count < 1) throw ConfigError("config: seed count must be >= 1");
            for (int i = 1; i <= count; ++i) spec.seeds.push_back(static_cast<std::uint64_t>(i));
        } else {
            for (const auto& tok : parts) spec.seeds.push_back(static_cast<std::uint64_t>(to_int(tok)));
        }
    } else if (key == "tau1") spec.tau1 = to_double(value);
    else if (key == "tau2") spec.tau2 = to_double(value);
    else if (key == "tau3") spec.tau3 = to_double(value);
    else if (key == "tau1_grid") spec.tau1_grid = parse_grid(value);
    else if (key == "tau_triples") {
        spec.tau_triples.clear();
        for (const auto& triple : split(value, ';')) {
            const auto parts = split(triple, ':');
            if (parts.size() != 3) throw ConfigError("config: tau_triples entries must be t1:t2:t3");
            spec.tau_triples.push_back({to_double(parts[0]), to_double(parts[1]), to_double(parts[2])});
        }
    } else if (key == "trace") spec.trace_path = value;
    else if (key == "cap") spec.state_cap = static_cast<std::size_t>(to_double(value));
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline ExperimentSpec experiment_from_stream(std::istream& in) {
    ExperimentSpec spec;
    spec.seeds.clear();
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = cfgdetail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key = value, got: " + line);
        apply_setting(spec, cfgdetail::trim(line.substr(0, eq)), cfgdetail::trim(line.substr(eq + 1)));
    }
    if (spec.seeds.empty()) spec.seeds = {1, 2, 3, 4, 5};
    return spec;
}

inline ExperimentSpec experiment_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return experiment_from_stream(in);
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

inline void run_bound(const ExperimentSpec& spec, std::ostream& out) {
    if (spec.deltas.empty() || spec.k_list.empty())
        throw ConfigError("bound: needs nonempty 'deltas' and 'K_list' grids");
    out << "curve,delta,K,lambda_star\n";
    for (int k : spec.k_list)
        for (double d : spec.deltas)
            out << "K=" << k << "," << csv_number(d) << "," << k << ","
                << csv_number(throughput_bound({d, k})) << "\n";
    for (double a : spec.utilization_curves)
        for (double d : spec.deltas) {
            const double kf = a / d;
            const int k = static_cast<int>(std::llround(kf));
            if (k < 1 || std::abs(kf - k) > 1e-9) continue;  // integer queue limits only
            out << "deltaK=" << csv_number(a) << "," << csv_number(d) << "," << k << ","
                << csv_number(throughput_bound({d, k})) << "\n";
        }
}

inline void run_pmf(const ExperimentSpec& spec, std::ostream& out) {
    const UpdateLaw law{spec.tau, spec.queue_limit};
    const auto pmf = open_closed_pmf(spec.servers, spec.lambda, law);
    out << "N,lambda,tau,K,n,probability\n";
    for (std::size_t n = 0; n < pmf.size(); ++n)
        out << spec.servers << "," << csv_number(spec.lambda) << "," << csv_number(spec.tau) << ","
            << spec.queue_limit << "," << n << "," << csv_number(pmf[n]) << "\n";
}

inline void run_extension_table(const ExperimentSpec& spec, std::ostream& out) {
    std::vector<std::array<double, 3>> rows = spec.tau_triples;
    if (rows.empty()) {
        if (spec.tau1_grid.empty()) throw ConfigError("extension: needs 'tau1_grid' or 'tau_triples'");
        for (double t1 : spec.tau1_grid) rows.push_back({t1, spec.tau2, spec.tau3});
    }
    out << "tau1,tau2,tau3,lambda_star,messages_per_job,mean_queue_position\n";
    for (const auto& [t1, t2, t3] : rows) {
        const ExtensionMetrics m = extension_metrics({t1, t2, t3});  // rejects tau3 = 0
        out << csv_number(t1) << "," << csv_number(t2) << "," << csv_number(t3) << ","
            << csv_number(m.throughput_cap) << "," << csv_number(m.messages_per_job) << ","
            << csv_number(m.mean_queue_position) << "\n";
    }
}

/// One sweep point: scheme plus its parameters.
struct SweepPoint {
    SchemeKind scheme = SchemeKind::baseline;
    double tau = 1.0;
    double lambda = 1.2;
    std::array<double, 3> cooldowns{0.0, 1.0, 1.0};
};

inline SimConfig sim_config_for(const ExperimentSpec& spec, const SweepPoint& point, std::uint64_t seed) {
    SimConfig cfg;
    cfg.servers = spec.servers;
    cfg.arrival_rate = point.lambda;
    cfg.policy.kind = point.scheme;
    cfg.policy.queue_limit = spec.queue_limit;
    cfg.policy.update_interval = point.tau;
    cfg.policy.selection = spec.selection;
    cfg.policy.cooldown_first = point.cooldowns[0];
    cfg.policy.cooldown_fill = point.cooldowns[1];
    cfg.policy.cooldown_repeat = point.cooldowns[2];
    cfg.policy.phasing = spec.phasing;
    cfg.service = spec.service;
    cfg.horizon = spec.horizon;
    cfg.warmup_fraction = spec.warmup;
    cfg.sample_interval = spec.sample_interval;
    cfg.seed = seed;
    return cfg;
}

inline void run_sweep(const ExperimentSpec& spec, std::ostream& out) {
    if (spec.seeds.empty()) throw ConfigError("sweep: need at least one seed");
    if (spec.mode == ExperimentMode::sweep && spec.seeds.size() < 2)
        throw ConfigError("sweep: need at least 2 seeds for confidence intervals");
    std::vector<SweepPoint> points;
    const std::vector<double> lambdas = spec.lambda_grid.empty() ? std::vector<double>{spec.lambda}
                                                                 : spec.lambda_grid;
    for (SchemeKind scheme : spec.schemes) {
        if (scheme == SchemeKind::extension) {
            for (double lam : lambdas)
                points.push_back({scheme, std::numeric_limits<double>::quiet_NaN(), lam,
                                  {spec.tau1, spec.tau2, spec.tau3}});
            continue;
        }
        const std::vector<double> taus = spec.tau_grid.empty() ? std::vector<double>{spec.tau} : spec.tau_grid;
        for (double tau : taus)
            for (double lam : lambdas) points.push_back({scheme, tau, lam, {spec.tau1, spec.tau2, spec.tau3}});
    }

    if (!spec.trace_path.empty() && points.size() > 1)
        throw ConfigError("trace dumps need a single sweep point (one scheme, one grid value)");

    // all (point, seed) runs in parallel; rows assembled in point order
    const std::size_t per_point = spec.seeds.size();
    std::vector<Metrics> results(points.size() * per_point);
    parallel_for(results.size(), spec.jobs, [&](std::size_t i) {
        const auto& point = points[i / per_point];
        SimConfig cfg = sim_config_for(spec, point, spec.seeds[i % per_point]);
        if (!spec.trace_path.empty())
            cfg.trace_path = spec.trace_path + ".seed" + std::to_string(spec.seeds[i % per_point]);
        results[i] = run_simulation(cfg);
    });

    out << "scheme,selection,service,K,N,lambda,tau,tau1,tau2,tau3,seeds,horizon,warmup,"
           "throughput,throughput_hw,blocking,blocking_hw,message_rate,message_rate_hw,"
           "messages_per_job,messages_per_job_hw,jobs_ahead,jobs_ahead_hw,open_fraction,open_fraction_hw,"
           "lambda_star,blocking_limit,blocking_exact,messages_per_job_exact,inv_tau,queue_position_exact,"
           "audits_ok\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t p = 0; p < points.size(); ++p) {
        const auto& point = points[p];
        const auto slice = std::span(results).subspan(p * per_point, per_point);
        MetricsSummary s;
        if (per_point >= 2) {
            s = estimate_ci(slice);
        } else {
            // single replication: means without interval widths
            const Metrics& m = slice.front();
            s.runs = 1;
            s.throughput = {m.throughput(), nan, 1};
            s.blocking = {m.blocking(), nan, 1};
            s.message_rate = {m.message_rate(), nan, 1};
            s.messages_per_job = {m.messages_per_job(), nan, 1};
            s.jobs_ahead = {m.mean_jobs_ahead(), nan, 1};
            s.open_fraction = {m.open_fraction(), nan, 1};
            s.audits_ok = m.audits.ok();
        }

        double lambda_star = nan, block_lim = nan, block_exact = nan, mpj_exact = nan, inv_tau = nan,
               queue_pos = nan;
        if (point.scheme == SchemeKind::extension) {
            const ExtensionParams params{point.cooldowns[0], point.cooldowns[1], point.cooldowns[2]};
            const ExtensionMetrics m = extension_metrics(params);
            const ExtensionDerived d = extension_derived(params);
            lambda_star = m.throughput_cap;
            block_lim = std::max(0.0, 1.0 - lambda_star / point.lambda);
            const double admit = d.gamma1 + d.gamma2;
            const double closed = d.kappa1 * params.tau1 + d.kappa2 * params.tau2 + d.kappa3 * params.tau3;
            block_exact = aggregate_level_blocking(spec.servers, admit / (point.lambda * spec.servers), closed);
            mpj_exact = m.messages_per_job;
            queue_pos = m.mean_queue_position;
        } else {
            const UpdateLaw law{point.tau, spec.queue_limit};
            lambda_star = throughput_bound({1.0 / point.tau, spec.queue_limit});
            block_lim = blocking_limit(point.lambda, 1.0 / point.tau, spec.queue_limit);
            block_exact = blocking_finite(spec.servers, point.lambda, law);
            mpj_exact = messages_per_admitted_job(law);
            inv_tau = 1.0 / point.tau;
        }

        out << to_string(point.scheme) << ","
            << (spec.selection == Selection::random_open ? "random" : "fcfs") << "," << spec.service.label()
            << "," << spec.queue_limit << "," << spec.servers << "," << csv_number(point.lambda) << ","
            << csv_number(point.tau) << "," << csv_number(point.cooldowns[0]) << ","
            << csv_number(point.cooldowns[1]) << "," << csv_number(point.cooldowns[2]) << ","
            << spec.seeds.size() << "," << csv_number(spec.horizon) << "," << csv_number(spec.warmup) << ","
            << csv_number(s.throughput.mean) << "," << csv_number(s.throughput.half_width) << ","
            << csv_number(s.blocking.mean) << "," << csv_number(s.blocking.half_width) << ","
            << csv_number(s.message_rate.mean) << "," << csv_number(s.message_rate.half_width) << ","
            << csv_number(s.messages_per_job.mean) << "," << csv_number(s.messages_per_job.half_width) << ","
            << csv_number(s.jobs_ahead.mean) << "," << csv_number(s.jobs_ahead.half_width) << ","
            << csv_number(s.open_fraction.mean) << "," << csv_number(s.open_fraction.half_width) << ","
            << csv_number(lambda_star) << "," << csv_number(block_lim) << "," << csv_number(block_exact) << ","
            << csv_number(mpj_exact) << "," << csv_number(inv_tau) << "," << csv_number(queue_pos) << ","
            << (s.audits_ok ? 1 : 0) << "\n";
    }
}

/// Dispatches one experiment; returns a process exit code (0 ok, 3 failed
/// verification).
inline int run_experiment(const ExperimentSpec& spec, std::ostream& out, std::ostream& log) {
    switch (spec.mode) {
        case ExperimentMode::bound: run_bound(spec, out); return 0;
        case ExperimentMode::pmf: run_pmf(spec, out); return 0;
        case ExperimentMode::extension: run_extension_table(spec, out); return 0;
        case ExperimentMode::simulate:
        case ExperimentMode::sweep: run_sweep(spec, out); return 0;
        case ExperimentMode::verify: {
            const VerifyReport report = run_verification(spec.state_cap);
            print_report(report, log);
            double worst = 0.0;
            for (const auto& e : report.entries) worst = std::max(worst, e.residual);
            return report.all_pass && worst <= 1e-8 ? 0 : 3;
        }
    }
    return 0;
}

}  // namespace qlim
