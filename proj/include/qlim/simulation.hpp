#pragma once

// Deterministic seeded discrete-event engine. One run is strictly sequential;
// independent runs share no state and may execute concurrently.
//
// Service model: exponential services use per-server potential-completion tick
// streams (a tick completes a job only when the server is working and
// nonempty), which is exact by memorylessness and carries the non-idling
// coupling; gamma services schedule explicit per-job completions and a paused
// server freezes the remaining work of its in-progress job.

#include <array>
#include <bit>
#include <fstream>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/rng.hpp"
#include "qlim/schemes.hpp"
#include "qlim/stats.hpp"

namespace qlim {

struct AuditError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ServiceSpec {
    enum class Kind { exponential, gamma };
    Kind kind = Kind::exponential;
    double gamma_shape = 1.0;
    double gamma_rate = 1.0;
    std::vector<double> speeds;  // optional per-server rates, exponential only (experimental)

    double mean_speed(int servers) const {
        if (speeds.empty()) return 1.0;
        double s = 0.0;
        for (double v : speeds) s += v;
        return s / servers;
    }

    std::string label() const {
        if (kind == Kind::exponential) return speeds.empty() ? "exponential" : "exponential_heterogeneous";
        char buf[48];
        std::snprintf(buf, sizeof buf, "gamma:%g:%g", gamma_shape, gamma_rate);
        return buf;
    }

    void validate(int servers, SchemeKind scheme) const {
        if (kind == Kind::gamma) {
            if (!(gamma_shape > 0.0) || !(gamma_rate > 0.0))
                throw ConfigError("service: gamma shape and rate must be > 0");
            if (!speeds.empty()) throw ConfigError("service: per-server speeds require exponential services");
            if (scheme == SchemeKind::non_idling)
                throw ConfigError("service: the non-idling variant is defined for exponential services only");
        }
        if (!speeds.empty()) {
            if (static_cast<int>(speeds.size()) != servers)
                throw ConfigError("service: speeds must list one rate per server");
            for (double v : speeds)
                if (!(v > 0.0)) throw ConfigError("service: speeds must be > 0");
        }
    }
};

struct SimConfig {
    int servers = 100;          // N
    double arrival_rate = 1.2;  // lambda, normalized per server; arrivals come at rate lambda * N
    PolicyConfig policy;
    ServiceSpec service;
    double horizon = 1e4;          // T
    double warmup_fraction = 0.2;  // statistics discard [0, warmup * T)
    std::uint64_t seed = 1;
    double sample_interval = 0.0;  // open-count sampling spacing; 0 picks one per ~5 cycles
    std::string trace_path;        // optional event log: "time kind server payload" per line

    void validate() const {
        if (servers < 1) throw ConfigError("sim: servers must be >= 1");
        if (!(arrival_rate > 0.0)) throw ConfigError("sim: arrival_rate must be > 0");
        if (!(horizon > 0.0)) throw ConfigError("sim: horizon must be > 0");
        if (!(warmup_fraction >= 0.0) || warmup_fraction >= 1.0)
            throw ConfigError("sim: warmup_fraction must be in [0, 1)");
        if (sample_interval < 0.0) throw ConfigError("sim: sample_interval must be >= 0");
        policy.validate();
        service.validate(servers, policy.kind);
    }

    double effective_sample_interval() const {
        if (sample_interval > 0.0) return sample_interval;
        const double cycle = policy.kind == SchemeKind::extension
                                 ? policy.cooldown_first + policy.cooldown_fill + policy.cooldown_repeat
                                 : policy.update_interval;
        return 5.0 * std::max(1.0, cycle);
    }
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct PassCheckpoint {
    double t0 = 0.0;
    long long admitted = 0;
    long long messages = 0;
};

struct AuditReport {
    long long queue_limit_violations = 0;     // run aborts on the first one
    long long dispatcher_view_violations = 0; // dispatcher state below the actual queue
    long long coupling_violations = 0;        // non-idling virtual queue below the actual queue
    long long message_gap_violations = 0;     // probe spacing below the policy bound
    bool message_budget_ok = true;            // per-server probe count within bound * T + 1
    bool pass_bound_checked = false;          // admission-count inequality evaluated
    bool pass_bound_ok = true;
    double pass_bound_min_slack = std::numeric_limits<double>::infinity();

    bool ok() const {
        return queue_limit_violations == 0 && dispatcher_view_violations == 0 && coupling_violations == 0 &&
               message_gap_violations == 0 && message_budget_ok && (!pass_bound_checked || pass_bound_ok);
    }
};

struct Metrics {
    int servers = 0;
    double horizon = 0.0;
    double window_start = 0.0;

    // tallies over [window_start, horizon]
    long long arrivals = 0;
    long long admitted = 0;
    long long blocked = 0;
    long long messages = 0;
    long long completions = 0;
    double open_time_integral = 0.0;
    double jobs_ahead_sum = 0.0;
    std::vector<long long> open_count_samples;      // histogram over 0..N
    std::vector<long long> window_report_hist;      // full-window update reports, 0..K
    std::array<long long, 3> fill_report_hist{};    // extension: jobs left after a fill window
    std::array<long long, 3> repeat_report_hist{};  // extension: jobs left after a repeat window

    // full-horizon counters and audit data
    long long total_arrivals = 0;
    long long total_admitted = 0;
    long long total_messages = 0;
    std::vector<PassCheckpoint> checkpoints;
    AuditReport audits;

    double window_length() const { return horizon - window_start; }
    double throughput() const { return admitted / (window_length() * servers); }
    double blocking() const { return arrivals > 0 ? static_cast<double>(blocked) / arrivals : 0.0; }
    double message_rate() const { return messages / (window_length() * servers); }
    double messages_per_job() const {
        return admitted > 0 ? static_cast<double>(messages) / admitted : std::numeric_limits<double>::quiet_NaN();
    }
    double mean_jobs_ahead() const {
        return admitted > 0 ? jobs_ahead_sum / admitted : std::numeric_limits<double>::quiet_NaN();
    }
    double open_fraction() const { return open_time_integral / (window_length() * servers); }
};

/// Bit-exact equality, the determinism contract for identical config + seed.
inline bool identical(const Metrics& a, const Metrics& b) {
    auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v); };
    if (a.servers != b.servers || bits(a.horizon) != bits(b.horizon) || bits(a.window_start) != bits(b.window_start))
        return false;
    if (a.arrivals != b.arrivals || a.admitted != b.admitted || a.blocked != b.blocked ||
        a.messages != b.messages || a.completions != b.completions)
        return false;
    if (bits(a.open_time_integral) != bits(b.open_time_integral) || bits(a.jobs_ahead_sum) != bits(b.jobs_ahead_sum))
        return false;
    if (a.open_count_samples != b.open_count_samples || a.window_report_hist != b.window_report_hist ||
        a.fill_report_hist != b.fill_report_hist || a.repeat_report_hist != b.repeat_report_hist)
        return false;
    if (a.total_arrivals != b.total_arrivals || a.total_admitted != b.total_admitted ||
        a.total_messages != b.total_messages)
        return false;
    if (a.checkpoints.size() != b.checkpoints.size()) return false;
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i)
        if (bits(a.checkpoints[i].t0) != bits(b.checkpoints[i].t0) ||
            a.checkpoints[i].admitted != b.checkpoints[i].admitted ||
            a.checkpoints[i].messages != b.checkpoints[i].messages)
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// Admission-count audit (universal bound accounting)
// ---------------------------------------------------------------------------

struct PassAuditResult {
    struct Entry {
        double t0 = 0.0;
        long long admitted = 0;
        long long messages = 0;
        double bound = 0.0;   // 2KN + N * t0 * cap(realized rate)
        double slack = 0.0;   // bound - admitted
        bool budget_ok = true;
        bool ok = true;
    };
    std::vector<Entry> entries;
    bool ok = true;
    double min_slack = std::numeric_limits<double>::infinity();
};

/// Checks, at every stored checkpoint, that the number of admitted jobs stays
/// within 2KN + N*T0 * cap where the cap is evaluated at the realized message
/// rate (the tightest valid instantiation of the admission bound; it implies
/// the bound at any nominal rate >= the realized one). Only meaningful for
/// exponential services.
inline PassAuditResult pass_accounting_audit(const Metrics& metrics, const BoundParams& params) {
    params.validate();
    PassAuditResult result;
    for (const auto& cp : metrics.checkpoints) {
        PassAuditResult::Entry e;
        e.t0 = cp.t0;
        e.admitted = cp.admitted;
        e.messages = cp.messages;
        const double nt0 = static_cast<double>(metrics.servers) * cp.t0;
        double cap = 0.0;
        if (cp.messages > 0 && cp.t0 > 0.0) {
            const double realized_rate = cp.messages / nt0;
            cap = throughput_bound({realized_rate, params.queue_limit, params.mean_speed});
        }
        e.bound = 2.0 * params.queue_limit * metrics.servers + cap * nt0;
        e.slack = e.bound - cp.admitted;
        e.budget_ok = cp.messages <= params.message_rate * nt0 + metrics.servers + 1e-9;
        e.ok = e.slack >= -1e-6 && e.budget_ok;
        result.ok = result.ok && e.ok;
        result.min_slack = std::min(result.min_slack, e.slack);
        result.entries.push_back(e);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace detail {

enum class EventKind : std::uint8_t { update, reopen, arrival, tick, completion };

// simultaneous events: probes and window ends first, then arrivals, then
// service events; ties by server index, then insertion order
inline int event_priority(EventKind k) {
    switch (k) {
        case EventKind::update:
        case EventKind::reopen: return 0;
        case EventKind::arrival: return 1;
        default: return 2;
    }
}

struct Event {
    double time = 0.0;
    int priority = 0;
    int server = -1;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::arrival;
    std::uint64_t generation = 0;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.priority != b.priority) return a.priority > b.priority;
        if (a.server != b.server) return a.server > b.server;
        return a.seq > b.seq;
    }
};

}  // namespace detail

class SimulationEngine final : public UpdateScheduler {
  public:
    explicit SimulationEngine(const SimConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const int n = cfg_.servers;
        queue_.assign(static_cast<std::size_t>(n), 0);
        if (cfg_.policy.kind == SchemeKind::non_idling) virtual_queue_.assign(static_cast<std::size_t>(n), 0);
        speeds_ = cfg_.service.speeds;
        if (speeds_.empty()) speeds_.assign(static_cast<std::size_t>(n), 1.0);
        tick_mode_ = cfg_.service.kind == ServiceSpec::Kind::exponential;
        if (!tick_mode_) {
            serving_.assign(static_cast<std::size_t>(n), 0);
            has_frozen_.assign(static_cast<std::size_t>(n), 0);
            frozen_remaining_.assign(static_cast<std::size_t>(n), 0.0);
            scheduled_end_.assign(static_cast<std::size_t>(n), 0.0);
            service_generation_.assign(static_cast<std::size_t>(n), 0);
        }
        service_rng_.reserve(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) service_rng_.emplace_back(derive_stream(cfg_.seed, 0x100 + static_cast<std::uint64_t>(s)));
        arrival_rng_ = Rng(derive_stream(cfg_.seed, 1));
        select_rng_ = Rng(derive_stream(cfg_.seed, 2));
        dispatcher_ = make_dispatcher(cfg_.policy, n, *this, derive_stream(cfg_.seed, 3));

        update_count_.assign(static_cast<std::size_t>(n), 0);
        last_update_time_.assign(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());

        metrics_.servers = n;
        metrics_.horizon = cfg_.horizon;
        metrics_.window_start = cfg_.warmup_fraction * cfg_.horizon;
        metrics_.open_count_samples.assign(static_cast<std::size_t>(n) + 1, 0);
        metrics_.window_report_hist.assign(static_cast<std::size_t>(cfg_.policy.queue_limit) + 1, 0);
        for (double frac : {0.1, 0.5, 1.0}) checkpoint_times_.push_back(frac * cfg_.horizon);
        if (!cfg_.trace_path.empty()) {
            trace_out_.open(cfg_.trace_path, std::ios::binary);
            if (!trace_out_) throw ConfigError("sim: cannot open trace file " + cfg_.trace_path);
        }
    }

    // UpdateScheduler
    void schedule_update(int server, double when) override { push(when, detail::EventKind::update, server); }
    void schedule_reopen(int server, double when) override { push(when, detail::EventKind::reopen, server); }

    Metrics run() {
        dispatcher_->init(0.0);
        push(arrival_rng_.exponential(total_arrival_rate()), detail::EventKind::arrival, -1);
        if (tick_mode_)
            for (int s = 0; s < cfg_.servers; ++s)
                push(service_rng_[static_cast<std::size_t>(s)].exponential(speeds_[static_cast<std::size_t>(s)]),
                     detail::EventKind::tick, s);

        sample_spacing_ = cfg_.effective_sample_interval();
        next_sample_ = sample_spacing_;

        while (!events_.empty() && events_.top().time <= cfg_.horizon) {
            const detail::Event ev = events_.top();
            events_.pop();
            advance_accounting(ev.time);
            trace_[trace_head_ % trace_.size()] = ev;
            ++trace_head_;
            switch (ev.kind) {
                case detail::EventKind::arrival: handle_arrival(ev.time); break;
                case detail::EventKind::update: handle_update(ev.server, ev.time); break;
                case detail::EventKind::reopen: handle_reopen(ev.server, ev.time); break;
                case detail::EventKind::tick: handle_tick(ev.server, ev.time); break;
                case detail::EventKind::completion: handle_completion(ev.server, ev.time, ev.generation); break;
            }
        }
        advance_accounting(cfg_.horizon);
        while (checkpoint_index_ < checkpoint_times_.size()) snapshot_checkpoint();
        finalize_audits();
        return metrics_;
    }

  private:
    double total_arrival_rate() const { return cfg_.arrival_rate * cfg_.servers; }
    bool windowed(double t) const { return t >= metrics_.window_start; }

    void push(double when, detail::EventKind kind, int server, std::uint64_t generation = 0) {
        events_.push({when, detail::event_priority(kind), server, next_seq_++, kind, generation});
    }

    void advance_accounting(double t) {
        while (checkpoint_index_ < checkpoint_times_.size() && checkpoint_times_[checkpoint_index_] < t)
            snapshot_checkpoint();
        const double a = std::max(last_time_, metrics_.window_start);
        const double b = std::min(t, cfg_.horizon);
        if (b > a) metrics_.open_time_integral += static_cast<double>(dispatcher_->open_count()) * (b - a);
        while (next_sample_ <= t && next_sample_ <= cfg_.horizon) {
            if (next_sample_ >= metrics_.window_start)
                metrics_.open_count_samples[static_cast<std::size_t>(dispatcher_->open_count())]++;
            next_sample_ += sample_spacing_;
        }
        last_time_ = t;
    }

    void snapshot_checkpoint() {
        metrics_.checkpoints.push_back(
            {checkpoint_times_[checkpoint_index_], metrics_.total_admitted, metrics_.total_messages});
        ++checkpoint_index_;
    }

    void handle_arrival(double t) {
        metrics_.total_arrivals++;
        const bool in_window = windowed(t);
        if (in_window) metrics_.arrivals++;
        const int s = dispatcher_->on_arrival(t, select_rng_);
        trace(t, "arrival", s, s == kBlocked ? -1 : queue_[static_cast<std::size_t>(s)] + 1);
        if (s == kBlocked) {
            if (in_window) metrics_.blocked++;
        } else {
            const int ahead = queue_[static_cast<std::size_t>(s)];
            if (ahead > cfg_.policy.queue_limit - 1) abort_queue_limit(s, t, ahead);
            if (in_window) {
                metrics_.admitted++;
                metrics_.jobs_ahead_sum += ahead;
            }
            metrics_.total_admitted++;
            queue_[static_cast<std::size_t>(s)]++;
            if (!virtual_queue_.empty()) virtual_queue_[static_cast<std::size_t>(s)]++;
            if (!tick_mode_) sync_service(s, t);
            audit_views(s);
        }
        push(t + arrival_rng_.exponential(total_arrival_rate()), detail::EventKind::arrival, -1);
    }

    void handle_update(int s, double t) {
        const int reported = dispatcher_->report_source() == ReportSource::virtual_queue
                                 ? virtual_queue_[static_cast<std::size_t>(s)]
                                 : queue_[static_cast<std::size_t>(s)];
        audit_message_gap(s, t);
        update_count_[static_cast<std::size_t>(s)]++;
        metrics_.total_messages++;
        if (windowed(t)) {
            metrics_.messages++;
            switch (dispatcher_->report_bucket(s)) {
                case ReportBucket::full_window:
                    metrics_.window_report_hist[static_cast<std::size_t>(reported)]++;
                    break;
                case ReportBucket::fill_window:
                    metrics_.fill_report_hist[static_cast<std::size_t>(reported)]++;
                    break;
                case ReportBucket::repeat_window:
                    metrics_.repeat_report_hist[static_cast<std::size_t>(reported)]++;
                    break;
                case ReportBucket::none: break;
            }
        }
        trace(t, "update", s, reported);
        dispatcher_->on_update(s, reported, t);
        if (!tick_mode_) sync_service(s, t);
        audit_views(s);
    }

    void handle_reopen(int s, double t) {
        trace(t, "reopen", s, queue_[static_cast<std::size_t>(s)]);
        dispatcher_->on_reopen(s, t);
        if (!tick_mode_) sync_service(s, t);
        audit_views(s);
    }

    void handle_tick(int s, double t) {
        push(t + service_rng_[static_cast<std::size_t>(s)].exponential(speeds_[static_cast<std::size_t>(s)]),
             detail::EventKind::tick, s);
        if (cfg_.policy.kind == SchemeKind::non_idling) {
            // the server never idles: a tick drains the actual queue whenever
            // possible, and the dispatcher-visible virtual queue only during
            // closed windows (as if the server had idled while open)
            if (queue_[static_cast<std::size_t>(s)] > 0) {
                queue_[static_cast<std::size_t>(s)]--;
                if (windowed(t)) metrics_.completions++;
            }
            if (dispatcher_->labeled_closed(s) && virtual_queue_[static_cast<std::size_t>(s)] > 0)
                virtual_queue_[static_cast<std::size_t>(s)]--;
            if (virtual_queue_[static_cast<std::size_t>(s)] < queue_[static_cast<std::size_t>(s)])
                metrics_.audits.coupling_violations++;
        } else if (dispatcher_->working(s) && queue_[static_cast<std::size_t>(s)] > 0) {
            queue_[static_cast<std::size_t>(s)]--;
            if (windowed(t)) metrics_.completions++;
        }
        trace(t, "tick", s, queue_[static_cast<std::size_t>(s)]);
        audit_views(s);
    }

    void handle_completion(int s, double t, std::uint64_t generation) {
        if (generation != service_generation_[static_cast<std::size_t>(s)]) return;  // cancelled by a pause
        serving_[static_cast<std::size_t>(s)] = 0;
        queue_[static_cast<std::size_t>(s)]--;
        if (windowed(t)) metrics_.completions++;
        trace(t, "completion", s, queue_[static_cast<std::size_t>(s)]);
        sync_service(s, t);
        audit_views(s);
    }

    // gamma mode: align the in-progress job with the policy's working flag
    void sync_service(int s, double t) {
        const auto idx = static_cast<std::size_t>(s);
        const bool should_work = dispatcher_->working(s);
        if (should_work && !serving_[idx] && queue_[idx] > 0) {
            double duration;
            if (has_frozen_[idx]) {
                duration = frozen_remaining_[idx];
                has_frozen_[idx] = 0;
            } else {
                duration = service_rng_[idx].gamma(cfg_.service.gamma_shape, cfg_.service.gamma_rate);
            }
            serving_[idx] = 1;
            scheduled_end_[idx] = t + duration;
            ++service_generation_[idx];
            push(scheduled_end_[idx], detail::EventKind::completion, s, service_generation_[idx]);
        } else if (!should_work && serving_[idx]) {
            frozen_remaining_[idx] = scheduled_end_[idx] - t;  // freeze remaining work
            has_frozen_[idx] = 1;
            serving_[idx] = 0;
            ++service_generation_[idx];  // cancels the scheduled completion
        }
    }

    void audit_views(int s) {
        const int q = queue_[static_cast<std::size_t>(s)];
        if (q > cfg_.policy.queue_limit) metrics_.audits.queue_limit_violations++;
        if (dispatcher_->state_upper_bound(s) < q) metrics_.audits.dispatcher_view_violations++;
    }

    void audit_message_gap(int s, double t) {
        const double prev = last_update_time_[static_cast<std::size_t>(s)];
        last_update_time_[static_cast<std::size_t>(s)] = t;
        if (!std::isfinite(prev)) return;
        const double gap = t - prev;
        if (cfg_.policy.kind == SchemeKind::aujsq) {
            if (std::abs(gap - cfg_.policy.update_interval) > 1e-9) metrics_.audits.message_gap_violations++;
        } else {
            const double min_gap = 1.0 / cfg_.policy.message_rate_bound();
            if (gap < min_gap - 1e-9) metrics_.audits.message_gap_violations++;
        }
    }

    void finalize_audits() {
        const double allowed =
            cfg_.policy.message_rate_bound() * cfg_.horizon + 1.0 + 1e-9;  // +1 covers the phase boundary
        for (int s = 0; s < cfg_.servers; ++s)
            if (static_cast<double>(update_count_[static_cast<std::size_t>(s)]) > allowed)
                metrics_.audits.message_budget_ok = false;
        if (tick_mode_) {
            // the admission-count inequality presumes exponential services
            const BoundParams params{cfg_.policy.message_rate_bound(), cfg_.policy.queue_limit,
                                     cfg_.service.mean_speed(cfg_.servers)};
            const auto audit = pass_accounting_audit(metrics_, params);
            metrics_.audits.pass_bound_checked = true;
            metrics_.audits.pass_bound_ok = audit.ok;
            metrics_.audits.pass_bound_min_slack = audit.min_slack;
        }
    }

    void trace(double t, const char* kind, int server, long long payload) {
        if (!trace_out_.is_open()) return;
        char line[96];
        std::snprintf(line, sizeof line, "%.17g %s %d %lld\n", t, kind, server, payload);
        trace_out_ << line;
    }

    [[noreturn]] void abort_queue_limit(int s, double t, int ahead) {
        metrics_.audits.queue_limit_violations++;
        std::ostringstream out;
        out << "queue limit violated: server " << s << " held " << ahead << " jobs at assignment time " << t
            << " (limit " << cfg_.policy.queue_limit << "); this is an engine/policy bug, not a legal outcome.";
        out << " Recent events (time kind server):";
        static constexpr const char* names[] = {"update", "reopen", "arrival", "tick", "completion"};
        const std::size_t count = std::min<std::size_t>(trace_head_, trace_.size());
        for (std::size_t i = trace_head_ - count; i < trace_head_; ++i) {
            const auto& ev = trace_[i % trace_.size()];
            out << " [" << ev.time << " " << names[static_cast<int>(ev.kind)] << " " << ev.server << "]";
        }
        throw AuditError(out.str());
    }

    SimConfig cfg_;
    Metrics metrics_;

    std::vector<int> queue_;
    std::vector<int> virtual_queue_;  // non-idling only
    std::vector<double> speeds_;
    bool tick_mode_ = true;

    // gamma-mode service state
    std::vector<char> serving_;
    std::vector<char> has_frozen_;
    std::vector<double> frozen_remaining_;
    std::vector<double> scheduled_end_;
    std::vector<std::uint64_t> service_generation_;

    Rng arrival_rng_{0};
    Rng select_rng_{0};
    std::vector<Rng> service_rng_;
    std::unique_ptr<Dispatcher> dispatcher_;

    std::priority_queue<detail::Event, std::vector<detail::Event>, detail::EventAfter> events_;
    std::uint64_t next_seq_ = 0;
    std::array<detail::Event, 32> trace_{};
    std::size_t trace_head_ = 0;
    std::ofstream trace_out_;

    std::vector<long long> update_count_;
    std::vector<double> last_update_time_;
    std::vector<double> checkpoint_times_;
    std::size_t checkpoint_index_ = 0;

    double last_time_ = 0.0;
    double next_sample_ = 0.0;
    double sample_spacing_ = 0.0;
};

/// Runs one simulation; identical config + seed gives bit-identical Metrics.
inline Metrics run_simulation(const SimConfig& cfg) { return SimulationEngine(cfg).run(); }

// ---------------------------------------------------------------------------
// Replication summaries
// ---------------------------------------------------------------------------

struct MetricsSummary {
    CiStat throughput, blocking, message_rate, messages_per_job, jobs_ahead, open_fraction;
    int runs = 0;
    bool audits_ok = true;
};

/// Per-metric sample mean and t-based 95% half-width over independent seeds.
inline MetricsSummary estimate_ci(std::span<const Metrics> runs) {
    if (runs.size() < 2) throw std::invalid_argument("estimate_ci: need at least 2 replications");
    auto collect = [&runs](auto&& get) {
        std::vector<double> xs;
        xs.reserve(runs.size());
        for (const auto& m : runs) xs.push_back(get(m));
        return t_confidence(xs);
    };
    MetricsSummary summary;
    summary.runs = static_cast<int>(runs.size());
    summary.throughput = collect([](const Metrics& m) { return m.throughput(); });
    summary.blocking = collect([](const Metrics& m) { return m.blocking(); });
    summary.message_rate = collect([](const Metrics& m) { return m.message_rate(); });
    summary.messages_per_job = collect([](const Metrics& m) { return m.messages_per_job(); });
    summary.jobs_ahead = collect([](const Metrics& m) { return m.mean_jobs_ahead(); });
    summary.open_fraction = collect([](const Metrics& m) { return m.open_fraction(); });
    for (const auto& m : runs) summary.audits_ok = summary.audits_ok && m.audits.ok();
    return summary;
}

}  // namespace qlim
