#pragma once

// Dispatcher policies. Each policy owns the per-server dispatcher bookkeeping
// (last report, jobs sent since, open/closed label or phase) and decides
// assignment, closure and update scheduling. The engine owns queues, service
// and metrics; it talks to the policy through the small interfaces below.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlim/rng.hpp"

namespace qlim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SchemeKind { baseline, non_idling, work_conserving, aujsq, extension };
enum class Selection { random_open, fcfs_open };
enum class AujsqPhasing { synchronized, staggered, random_phase };

inline std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::baseline: return "baseline";
        case SchemeKind::non_idling: return "non_idling";
        case SchemeKind::work_conserving: return "work_conserving";
        case SchemeKind::aujsq: return "aujsq";
        case SchemeKind::extension: return "extension";
    }
    return "?";
}

struct PolicyConfig {
    SchemeKind kind = SchemeKind::baseline;
    int queue_limit = 2;            // K
    double update_interval = 1.0;   // tau (timer family and aujsq)
    Selection selection = Selection::random_open;
    // cool-down extension (queue limit 2 only)
    double cooldown_first = 0.0;    // tau1, window after the first job
    double cooldown_fill = 1.0;     // tau2, window after the queue fills
    double cooldown_repeat = 1.0;   // tau3, repeat window on a full report
    AujsqPhasing phasing = AujsqPhasing::staggered;

    void validate() const {
        if (queue_limit < 1) throw ConfigError("policy: queue_limit must be >= 1");
        if (kind == SchemeKind::extension) {
            if (queue_limit != 2) throw ConfigError("policy: the cool-down extension requires queue_limit = 2");
            if (!(cooldown_first >= 0.0)) throw ConfigError("policy: cooldown_first must be >= 0");
            if (!(cooldown_fill > 0.0)) throw ConfigError("policy: cooldown_fill must be > 0");
            if (!(cooldown_repeat > 0.0)) throw ConfigError("policy: cooldown_repeat must be > 0");
        } else {
            if (!(update_interval > 0.0)) throw ConfigError("policy: update_interval must be > 0");
        }
    }

    /// Hard upper bound on the per-server probe rate, used by the message
    /// budget audit.
    double message_rate_bound() const {
        if (kind == SchemeKind::extension)
            return 1.0 / std::min(cooldown_repeat, cooldown_first + cooldown_fill);
        return 1.0 / update_interval;
    }
};

/// Engine-side scheduling hooks handed to the policy.
class UpdateScheduler {
  public:
    virtual ~UpdateScheduler() = default;
    virtual void schedule_update(int server, double when) = 0;  // probe + report
    virtual void schedule_reopen(int server, double when) = 0;  // silent window end
};

inline constexpr int kBlocked = -1;

/// What the engine should report at an update.
enum class ReportSource { actual_queue, virtual_queue };

/// Histogram bucket for an update report; used to validate the window-outcome
/// distributions against their closed forms.
enum class ReportBucket { none, full_window, fill_window, repeat_window };

class Dispatcher {
  public:
    virtual ~Dispatcher() = default;

    virtual void init(double now) = 0;

    /// Picks a server for an arriving job (or kBlocked) and applies the
    /// dispatcher-side bookkeeping, including closing and update scheduling.
    virtual int on_arrival(double now, Rng& selector) = 0;

    /// Applies a queue-length report at an update epoch.
    virtual void on_update(int server, int reported_queue, double now) = 0;

    /// Silent window end (cool-down extension only).
    virtual void on_reopen(int server, double now) = 0;

    virtual bool working(int server) const = 0;        // is the server serving jobs now
    virtual bool labeled_closed(int server) const = 0; // dispatcher-side label
    virtual int state_upper_bound(int server) const = 0;  // dispatcher view of the queue
    virtual int open_count() const = 0;
    virtual ReportSource report_source() const { return ReportSource::actual_queue; }
    virtual ReportBucket report_bucket(int server) const = 0;
};

// ---------------------------------------------------------------------------
// Open-server selection structure shared by the timer family and extension
// ---------------------------------------------------------------------------

/// Open servers with O(1) uniform sampling (members vector) and a stable
/// interaction order (intrusive list, front = least recently interacted).
/// Ties at equal interaction times resolve to the smaller index because
/// simultaneous events are processed in server order.
class OpenPool {
  public:
    explicit OpenPool(int servers)
        : position_(static_cast<std::size_t>(servers), kAbsent),
          next_(static_cast<std::size_t>(servers), kAbsent),
          prev_(static_cast<std::size_t>(servers), kAbsent) {}

    int size() const { return static_cast<int>(members_.size()); }
    bool contains(int server) const { return position_[static_cast<std::size_t>(server)] != kAbsent; }

    /// Inserts as the most recently interacted member.
    void push_back(int server) {
        position_[static_cast<std::size_t>(server)] = static_cast<int>(members_.size());
        members_.push_back(server);
        link_tail(server);
    }

    /// Server to dispatch to; does not remove it.
    int pick(Selection mode, Rng& rng) const {
        if (members_.empty()) return kBlocked;
        if (mode == Selection::fcfs_open) return head_;
        return members_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(members_.size())))];
    }

    void remove(int server) {
        const int pos = position_[static_cast<std::size_t>(server)];
        const int last = members_.back();
        members_[static_cast<std::size_t>(pos)] = last;
        position_[static_cast<std::size_t>(last)] = pos;
        members_.pop_back();
        position_[static_cast<std::size_t>(server)] = kAbsent;
        unlink(server);
    }

    /// Refreshes the interaction order (moves to the back of the list).
    void touch(int server) {
        unlink(server);
        link_tail(server);
    }

  private:
    static constexpr int kAbsent = -1;

    void link_tail(int server) {
        prev_[static_cast<std::size_t>(server)] = tail_;
        next_[static_cast<std::size_t>(server)] = kAbsent;
        if (tail_ != kAbsent) next_[static_cast<std::size_t>(tail_)] = server;
        tail_ = server;
        if (head_ == kAbsent) head_ = server;
    }

    void unlink(int server) {
        const int p = prev_[static_cast<std::size_t>(server)];
        const int n = next_[static_cast<std::size_t>(server)];
        if (p != kAbsent) next_[static_cast<std::size_t>(p)] = n; else head_ = n;
        if (n != kAbsent) prev_[static_cast<std::size_t>(n)] = p; else tail_ = p;
        prev_[static_cast<std::size_t>(server)] = next_[static_cast<std::size_t>(server)] = kAbsent;
    }

    std::vector<int> members_;   // unordered, for uniform sampling
    std::vector<int> position_;  // server -> index in members_, or kAbsent
    std::vector<int> next_, prev_;
    int head_ = kAbsent;
    int tail_ = kAbsent;
};

// ---------------------------------------------------------------------------
// Timer family: baseline, non-idling, work-conserving
// ---------------------------------------------------------------------------

/// Shared dispatcher logic of the timer family. The three variants see the
/// same reports by construction (the non-idling engine reports the virtual
/// queue), so their dispatcher traces coincide under a shared seed; they
/// differ only in when servers actually work.
class TimerDispatcher final : public Dispatcher {
  public:
    TimerDispatcher(const PolicyConfig& cfg, int servers, UpdateScheduler& scheduler)
        : cfg_(cfg), scheduler_(scheduler), pool_(servers),
          last_report_(static_cast<std::size_t>(servers), 0),
          sent_since_(static_cast<std::size_t>(servers), 0) {
        servers_ = servers;
    }

    void init(double) override {
        for (int s = 0; s < servers_; ++s) pool_.push_back(s);  // all open, as if updated at time 0
    }

    int on_arrival(double now, Rng& selector) override {
        const int s = pool_.pick(cfg_.selection, selector);
        if (s == kBlocked) return kBlocked;
        sent_since_[static_cast<std::size_t>(s)]++;
        if (state(s) >= cfg_.queue_limit) {
            pool_.remove(s);  // filled up: close and probe one interval later
            scheduler_.schedule_update(s, now + cfg_.update_interval);
        } else if (cfg_.selection == Selection::fcfs_open) {
            pool_.touch(s);
        }
        return s;
    }

    void on_update(int server, int reported_queue, double now) override {
        last_report_[static_cast<std::size_t>(server)] = reported_queue;
        sent_since_[static_cast<std::size_t>(server)] = 0;
        if (reported_queue < cfg_.queue_limit) {
            pool_.push_back(server);  // open again
        } else {
            scheduler_.schedule_update(server, now + cfg_.update_interval);  // still full
        }
    }

    void on_reopen(int, double) override { throw std::logic_error("timer family has no silent reopen"); }

    bool working(int server) const override {
        // baseline servers pause while open; the variants never pause
        return cfg_.kind != SchemeKind::baseline || labeled_closed(server);
    }

    bool labeled_closed(int server) const override { return state(server) >= cfg_.queue_limit; }
    int state_upper_bound(int server) const override { return state(server); }
    int open_count() const override { return pool_.size(); }

    ReportSource report_source() const override {
        return cfg_.kind == SchemeKind::non_idling ? ReportSource::virtual_queue : ReportSource::actual_queue;
    }

    ReportBucket report_bucket(int) const override {
        // baseline and non-idling windows always start from a full queue (in
        // the dispatcher's frame), so their reports follow the window-outcome
        // law; work-conserving windows may start lower.
        return cfg_.kind == SchemeKind::work_conserving ? ReportBucket::none : ReportBucket::full_window;
    }

  private:
    int state(int server) const {
        return last_report_[static_cast<std::size_t>(server)] + sent_since_[static_cast<std::size_t>(server)];
    }

    PolicyConfig cfg_;
    UpdateScheduler& scheduler_;
    OpenPool pool_;
    std::vector<int> last_report_;
    std::vector<int> sent_since_;
    int servers_ = 0;
};

// ---------------------------------------------------------------------------
// Timer-probed variant: every server is probed on a fixed clock
// ---------------------------------------------------------------------------

/// Probes every server exactly once per interval (per-server phase), assigns
/// arrivals to a lowest-state server, blocks when every state is at the
/// limit. Servers always work. Probes count as messages even when the state
/// is already known to be below the limit.
class AujsqDispatcher final : public Dispatcher {
  public:
    AujsqDispatcher(const PolicyConfig& cfg, int servers, UpdateScheduler& scheduler, std::uint64_t phase_seed)
        : cfg_(cfg), scheduler_(scheduler), servers_(servers),
          last_report_(static_cast<std::size_t>(servers), 0),
          sent_since_(static_cast<std::size_t>(servers), 0),
          by_state_(static_cast<std::size_t>(cfg.queue_limit) + 1), phase_seed_(phase_seed) {}

    void init(double now) override {
        Rng phase_rng(phase_seed_);
        for (int s = 0; s < servers_; ++s) {
            by_state_[0].insert(s);
            double phase = 0.0;
            if (cfg_.phasing == AujsqPhasing::staggered)
                phase = cfg_.update_interval * s / servers_;
            else if (cfg_.phasing == AujsqPhasing::random_phase)
                phase = cfg_.update_interval * phase_rng.uniform();
            scheduler_.schedule_update(s, now + phase);
        }
    }

    int on_arrival(double, Rng&) override {
        for (int k = 0; k < cfg_.queue_limit; ++k) {
            if (by_state_[static_cast<std::size_t>(k)].empty()) continue;
            const int s = *by_state_[static_cast<std::size_t>(k)].begin();  // lowest state, smallest index
            move_bucket(s, k, k + 1);
            sent_since_[static_cast<std::size_t>(s)]++;
            return s;
        }
        return kBlocked;
    }

    void on_update(int server, int reported_queue, double now) override {
        move_bucket(server, state(server), reported_queue);
        last_report_[static_cast<std::size_t>(server)] = reported_queue;
        sent_since_[static_cast<std::size_t>(server)] = 0;
        scheduler_.schedule_update(server, now + cfg_.update_interval);
    }

    void on_reopen(int, double) override { throw std::logic_error("timer-probed policy has no silent reopen"); }

    bool working(int) const override { return true; }
    bool labeled_closed(int server) const override { return state(server) >= cfg_.queue_limit; }
    int state_upper_bound(int server) const override { return state(server); }

    int open_count() const override {
        return servers_ - static_cast<int>(by_state_[static_cast<std::size_t>(cfg_.queue_limit)].size());
    }

    ReportBucket report_bucket(int) const override { return ReportBucket::none; }

  private:
    int state(int server) const {
        return last_report_[static_cast<std::size_t>(server)] + sent_since_[static_cast<std::size_t>(server)];
    }

    void move_bucket(int server, int from, int to) {
        by_state_[static_cast<std::size_t>(from)].erase(server);
        by_state_[static_cast<std::size_t>(to)].insert(server);
    }

    PolicyConfig cfg_;
    UpdateScheduler& scheduler_;
    int servers_;
    std::vector<int> last_report_;
    std::vector<int> sent_since_;
    std::vector<std::set<int>> by_state_;  // servers grouped by dispatcher state
    std::uint64_t phase_seed_;
};

// ---------------------------------------------------------------------------
// Cool-down extension (queue limit 2)
// ---------------------------------------------------------------------------

/// Phase machine: idle-open -> (job) first window -> half-open -> (job) fill
/// window -> update routes by jobs left (0: idle-open, 1: first window,
/// 2: repeat window); the repeat window ends in another update with the same
/// routing. Messages flow only at fill/repeat window ends.
class ExtensionDispatcher final : public Dispatcher {
  public:
    enum class Phase { idle_open, first_window, half_open, fill_window, repeat_window };

    ExtensionDispatcher(const PolicyConfig& cfg, int servers, UpdateScheduler& scheduler)
        : cfg_(cfg), scheduler_(scheduler), pool_(servers),
          phase_(static_cast<std::size_t>(servers), Phase::idle_open) {
        servers_ = servers;
    }

    void init(double) override {
        for (int s = 0; s < servers_; ++s) pool_.push_back(s);
    }

    int on_arrival(double now, Rng& selector) override {
        const int s = pool_.pick(cfg_.selection, selector);
        if (s == kBlocked) return kBlocked;
        pool_.remove(s);
        auto& ph = phase_[static_cast<std::size_t>(s)];
        if (ph == Phase::idle_open) {
            ph = Phase::first_window;
            scheduler_.schedule_reopen(s, now + cfg_.cooldown_first);
        } else {
            ph = Phase::fill_window;
            scheduler_.schedule_update(s, now + cfg_.cooldown_fill);
        }
        return s;
    }

    void on_reopen(int server, double) override {
        phase_[static_cast<std::size_t>(server)] = Phase::half_open;
        pool_.push_back(server);
    }

    void on_update(int server, int reported_queue, double now) override {
        auto& ph = phase_[static_cast<std::size_t>(server)];
        switch (reported_queue) {
            case 0:
                ph = Phase::idle_open;
                pool_.push_back(server);
                break;
            case 1:
                ph = Phase::first_window;
                scheduler_.schedule_reopen(server, now + cfg_.cooldown_first);
                break;
            case 2:
                ph = Phase::repeat_window;
                scheduler_.schedule_update(server, now + cfg_.cooldown_repeat);
                break;
            default:
                throw std::logic_error("extension: report outside 0..2");
        }
    }

    bool working(int server) const override {
        const Phase ph = phase_[static_cast<std::size_t>(server)];
        return ph == Phase::first_window || ph == Phase::fill_window || ph == Phase::repeat_window;
    }

    bool labeled_closed(int server) const override { return working(server); }

    int state_upper_bound(int server) const override {
        switch (phase_[static_cast<std::size_t>(server)]) {
            case Phase::idle_open: return 0;
            case Phase::first_window:
            case Phase::half_open: return 1;
            default: return 2;
        }
    }

    int open_count() const override { return pool_.size(); }

    ReportBucket report_bucket(int server) const override {
        return phase_[static_cast<std::size_t>(server)] == Phase::fill_window ? ReportBucket::fill_window
                                                                              : ReportBucket::repeat_window;
    }

    Phase phase(int server) const { return phase_[static_cast<std::size_t>(server)]; }

  private:
    PolicyConfig cfg_;
    UpdateScheduler& scheduler_;
    OpenPool pool_;
    std::vector<Phase> phase_;
    int servers_ = 0;
};

/// Factory. `phase_seed` feeds only the random-phase mode of the timer-probed
/// policy.
inline std::unique_ptr<Dispatcher> make_dispatcher(const PolicyConfig& cfg, int servers,
                                                   UpdateScheduler& scheduler, std::uint64_t phase_seed = 0) {
    cfg.validate();
    if (servers < 1) throw ConfigError("policy: need at least one server");
    switch (cfg.kind) {
        case SchemeKind::baseline:
        case SchemeKind::non_idling:
        case SchemeKind::work_conserving:
            return std::make_unique<TimerDispatcher>(cfg, servers, scheduler);
        case SchemeKind::aujsq:
            return std::make_unique<AujsqDispatcher>(cfg, servers, scheduler, phase_seed);
        case SchemeKind::extension:
            return std::make_unique<ExtensionDispatcher>(cfg, servers, scheduler);
    }
    throw ConfigError("policy: unknown scheme");
}

}  // namespace qlim
