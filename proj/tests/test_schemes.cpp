#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qlim/analytic.hpp"
#include "qlim/schemes.hpp"
#include "qlim/simulation.hpp"
#include "qlim/stats.hpp"

using namespace qlim;

namespace {

struct RecordingScheduler final : UpdateScheduler {
    struct Entry {
        int server;
        double when;
        bool is_update;
    };
    std::vector<Entry> entries;

    void schedule_update(int server, double when) override { entries.push_back({server, when, true}); }
    void schedule_reopen(int server, double when) override { entries.push_back({server, when, false}); }

    Entry last() const {
        REQUIRE_FALSE(entries.empty());
        return entries.back();
    }
};

}  // namespace

TEST_CASE("timer dispatcher closes on the limit and schedules the probe", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::baseline;
    cfg.queue_limit = 2;
    cfg.update_interval = 1.5;
    cfg.selection = Selection::fcfs_open;  // deterministic pick order
    auto policy = make_dispatcher(cfg, 3, sched);
    policy->init(0.0);
    Rng rng(1);

    CHECK(policy->open_count() == 3);
    for (int s = 0; s < 3; ++s) {
        CHECK_FALSE(policy->labeled_closed(s));
        CHECK_FALSE(policy->working(s));  // open servers idle in the baseline
        CHECK(policy->state_upper_bound(s) == 0);
    }

    CHECK(policy->on_arrival(0.1, rng) == 0);
    CHECK(policy->state_upper_bound(0) == 1);
    CHECK_FALSE(policy->labeled_closed(0));
    CHECK(sched.entries.empty());

    CHECK(policy->on_arrival(0.15, rng) == 1);
    CHECK(policy->on_arrival(0.2, rng) == 2);
    // second job fills server 0: closed, probe one interval later
    CHECK(policy->on_arrival(0.3, rng) == 0);
    CHECK(policy->labeled_closed(0));
    CHECK(policy->working(0));
    CHECK(policy->open_count() == 2);
    CHECK(sched.last().server == 0);
    CHECK(sched.last().when == Catch::Approx(0.3 + 1.5));

    // full report keeps it closed for another interval; short report reopens
    policy->on_update(0, 2, 1.8);
    CHECK(policy->labeled_closed(0));
    CHECK(sched.last().when == Catch::Approx(1.8 + 1.5));
    policy->on_update(0, 1, 3.3);
    CHECK_FALSE(policy->labeled_closed(0));
    CHECK(policy->state_upper_bound(0) == 1);
    CHECK(policy->open_count() == 3);
}

TEST_CASE("queue limit one closes on every dispatch", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::baseline;
    cfg.queue_limit = 1;
    cfg.update_interval = 2.0;
    auto policy = make_dispatcher(cfg, 2, sched);
    policy->init(0.0);
    Rng rng(7);

    const int a = policy->on_arrival(0.1, rng);
    CHECK(policy->labeled_closed(a));
    const int b = policy->on_arrival(0.2, rng);
    CHECK(b != a);
    CHECK(policy->labeled_closed(b));
    CHECK(policy->on_arrival(0.3, rng) == kBlocked);  // everyone closed
    CHECK(sched.entries.size() == 2);
}

TEST_CASE("fcfs selection picks the least recently interacted open server", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::baseline;
    cfg.queue_limit = 3;
    cfg.update_interval = 1.0;
    cfg.selection = Selection::fcfs_open;
    auto policy = make_dispatcher(cfg, 3, sched);
    policy->init(0.0);
    Rng rng(5);

    // initial ties resolve by index, and each dispatch moves the server back
    CHECK(policy->on_arrival(0.1, rng) == 0);
    CHECK(policy->on_arrival(0.2, rng) == 1);
    CHECK(policy->on_arrival(0.3, rng) == 2);
    CHECK(policy->on_arrival(0.4, rng) == 0);
}

TEST_CASE("work-conserving variant reports are unbucketed and servers always work", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::work_conserving;
    cfg.queue_limit = 2;
    auto policy = make_dispatcher(cfg, 1, sched);
    policy->init(0.0);
    CHECK(policy->working(0));  // works while open too
    CHECK(policy->report_source() == ReportSource::actual_queue);
    CHECK(policy->report_bucket(0) == ReportBucket::none);
}

TEST_CASE("non-idling variant reads the virtual queue", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::non_idling;
    cfg.queue_limit = 2;
    auto policy = make_dispatcher(cfg, 1, sched);
    policy->init(0.0);
    CHECK(policy->working(0));
    CHECK(policy->report_source() == ReportSource::virtual_queue);
    CHECK(policy->report_bucket(0) == ReportBucket::full_window);
}

TEST_CASE("timer-probed policy assigns to the lowest state with index ties", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::aujsq;
    cfg.queue_limit = 2;
    cfg.update_interval = 1.0;
    cfg.phasing = AujsqPhasing::staggered;
    auto policy = make_dispatcher(cfg, 4, sched);
    policy->init(0.0);
    Rng rng(3);

    // staggered phases: server s first probed at s/N * tau
    REQUIRE(sched.entries.size() == 4);
    for (int s = 0; s < 4; ++s) {
        CHECK(sched.entries[static_cast<std::size_t>(s)].server == s);
        CHECK(sched.entries[static_cast<std::size_t>(s)].when == Catch::Approx(s / 4.0));
    }

    CHECK(policy->on_arrival(0.0, rng) == 0);  // all states 0: smallest index
    CHECK(policy->on_arrival(0.0, rng) == 1);
    CHECK(policy->on_arrival(0.0, rng) == 2);
    CHECK(policy->on_arrival(0.0, rng) == 3);
    CHECK(policy->on_arrival(0.0, rng) == 0);  // all at 1: wrap to the smallest index
    CHECK(policy->state_upper_bound(0) == 2);
    CHECK(policy->labeled_closed(0));
    CHECK(policy->on_arrival(0.0, rng) == 1);
    CHECK(policy->on_arrival(0.0, rng) == 2);
    CHECK(policy->on_arrival(0.0, rng) == 3);
    CHECK(policy->on_arrival(0.0, rng) == kBlocked);  // every state at the limit
    CHECK(policy->open_count() == 0);

    // a probe reporting one job reopens the server and re-arms its timer
    policy->on_update(2, 1, 0.5);
    CHECK(policy->state_upper_bound(2) == 1);
    CHECK(sched.last().server == 2);
    CHECK(sched.last().when == Catch::Approx(1.5));
    CHECK(policy->on_arrival(0.6, rng) == 2);
}

TEST_CASE("extension phase machine", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig cfg;
    cfg.kind = SchemeKind::extension;
    cfg.queue_limit = 2;
    cfg.cooldown_first = 0.5;
    cfg.cooldown_fill = 1.0;
    cfg.cooldown_repeat = 2.0;
    auto policy = make_dispatcher(cfg, 1, sched);
    auto* ext = dynamic_cast<ExtensionDispatcher*>(policy.get());
    REQUIRE(ext != nullptr);
    policy->init(0.0);
    Rng rng(11);

    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::idle_open);
    CHECK_FALSE(policy->working(0));
    CHECK(policy->state_upper_bound(0) == 0);

    // first job: silent first window
    CHECK(policy->on_arrival(0.0, rng) == 0);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::first_window);
    CHECK(policy->working(0));
    CHECK(policy->state_upper_bound(0) == 1);
    CHECK_FALSE(sched.last().is_update);
    CHECK(sched.last().when == Catch::Approx(0.5));
    CHECK(policy->on_arrival(0.1, rng) == kBlocked);  // nothing open meanwhile

    // window ends silently: half-open
    policy->on_reopen(0, 0.5);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::half_open);
    CHECK_FALSE(policy->working(0));

    // second job: fill window ends in a probe
    CHECK(policy->on_arrival(0.7, rng) == 0);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::fill_window);
    CHECK(policy->report_bucket(0) == ReportBucket::fill_window);
    CHECK(sched.last().is_update);
    CHECK(sched.last().when == Catch::Approx(1.7));

    // full report: repeat window, then a one-job report back to first window
    policy->on_update(0, 2, 1.7);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::repeat_window);
    CHECK(policy->report_bucket(0) == ReportBucket::repeat_window);
    CHECK(sched.last().when == Catch::Approx(3.7));
    policy->on_update(0, 1, 3.7);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::first_window);
    CHECK_FALSE(sched.last().is_update);
    policy->on_reopen(0, 4.2);
    // empty report opens fully
    CHECK(policy->on_arrival(4.5, rng) == 0);
    policy->on_update(0, 0, 5.5);
    CHECK(ext->phase(0) == ExtensionDispatcher::Phase::idle_open);
}

TEST_CASE("policy validation", "[schemes]") {
    RecordingScheduler sched;
    PolicyConfig bad;
    bad.kind = SchemeKind::extension;
    bad.queue_limit = 3;
    CHECK_THROWS_AS(make_dispatcher(bad, 2, sched), ConfigError);

    PolicyConfig zero_repeat;
    zero_repeat.kind = SchemeKind::extension;
    zero_repeat.queue_limit = 2;
    zero_repeat.cooldown_repeat = 0.0;
    CHECK_THROWS_AS(make_dispatcher(zero_repeat, 2, sched), ConfigError);

    PolicyConfig bad_tau;
    bad_tau.update_interval = 0.0;
    CHECK_THROWS_AS(make_dispatcher(bad_tau, 2, sched), ConfigError);

    // extension probe-rate bound uses the shortest possible spacing
    PolicyConfig ext;
    ext.kind = SchemeKind::extension;
    ext.queue_limit = 2;
    ext.cooldown_first = 0.5;
    ext.cooldown_fill = 1.0;
    ext.cooldown_repeat = 2.0;
    CHECK(ext.message_rate_bound() == Catch::Approx(1.0 / 1.5));
}

TEST_CASE("window reports follow the window-outcome law", "[schemes][simulation]") {
    SimConfig cfg;
    cfg.servers = 50;
    cfg.arrival_rate = 1.2;
    cfg.policy.kind = SchemeKind::baseline;
    cfg.policy.queue_limit = 2;
    cfg.policy.update_interval = 2.0;
    cfg.horizon = 4000;
    cfg.seed = 99;
    const Metrics m = run_simulation(cfg);

    const auto p = update_transition_probs({2.0, 2});
    const auto result = chi_square_gof(m.window_report_hist, p);
    INFO("chi2 " << result.statistic << " dof " << result.dof << " p " << result.p_value);
    CHECK(result.p_value > 1e-3);
    long long total = 0;
    for (long long c : m.window_report_hist) total += c;
    CHECK(total == m.messages);
}

TEST_CASE("non-idling rejects non-exponential services", "[schemes]") {
    SimConfig cfg;
    cfg.policy.kind = SchemeKind::non_idling;
    cfg.service.kind = ServiceSpec::Kind::gamma;
    cfg.service.gamma_shape = 2.0;
    cfg.service.gamma_rate = 2.0;
    CHECK_THROWS_AS(run_simulation(cfg), ConfigError);
}
