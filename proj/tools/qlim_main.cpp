// Command-line front end: analytic tables, open/closed pmf, simulation sweeps,
// cross-oracle verification, the cool-down extension tables and preset
// reproduction. Exit codes: 0 success, 1 usage, 2 config, 3 audit or
// verification failure.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qlim/experiment.hpp"
#include "qlim/network.hpp"
#include "qlim/verify.hpp"

namespace {

struct CommonFlags {
    std::string output;
    std::vector<std::string> overrides;  // key=value pairs applied last
    std::string config_file;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("-o,--output", flags.output, "Write CSV here instead of stdout");
    cmd->add_option("--set", flags.overrides, "Override a config key (key=value), repeatable");
}

void apply_overrides(qlim::ExperimentSpec& spec, const CommonFlags& flags) {
    for (const auto& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw qlim::ConfigError("--set expects key=value, got '" + kv + "'");
        qlim::apply_setting(spec, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!flags.output.empty()) spec.output = flags.output;
}

int run(const qlim::ExperimentSpec& spec) {
    if (spec.output.empty()) return qlim::run_experiment(spec, std::cout, std::cout);
    std::ofstream out(spec.output, std::ios::binary);
    if (!out) throw qlim::ConfigError("cannot open output file " + spec.output);
    return qlim::run_experiment(spec, out, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Load-balancing toolkit: throughput bounds, product-form equilibria and\n"
                 "discrete-event simulation of timer-driven dispatching under a strict queue limit"};
    app.require_subcommand(1);

    CommonFlags flags;
    qlim::ExperimentSpec spec;
    spec.seeds.clear();

    auto* bound = app.add_subcommand("bound", "Tabulate the throughput bound over rate/limit grids");
    std::string deltas = "0.02:2:0.02", k_list = "1,2,3,5,10", curves;
    bound->add_option("--deltas", deltas, "Message-rate grid (a:b:step or comma list)");
    bound->add_option("--K", k_list, "Queue-limit list");
    bound->add_option("--curves", curves, "Utilization curves a with K = a/delta (comma list)");
    add_common(bound, flags);

    auto* pmf = app.add_subcommand("pmf", "Open/closed-count equilibrium pmf of the timer scheme");
    pmf->add_option("--N", spec.servers, "Number of servers");
    pmf->add_option("--lambda", spec.lambda, "Normalized arrival rate");
    pmf->add_option("--tau", spec.tau, "Update interval");
    pmf->add_option("--K", spec.queue_limit, "Queue limit");
    add_common(pmf, flags);

    auto* simulate = app.add_subcommand("simulate", "Run one simulation point (with seed replications)");
    auto* sweep = app.add_subcommand("sweep", "Run a simulation sweep over tau and/or lambda grids");
    std::string seeds_flag, horizon_flag, warmup_flag, trace_flag;
    for (CLI::App* cmd : {simulate, sweep}) {
        cmd->add_option("-c,--config", flags.config_file, "Experiment config file (key = value lines)");
        cmd->add_option("--seeds", seeds_flag, "Seed list (comma) or bare replication count");
        cmd->add_option("--horizon", horizon_flag, "Simulated time span");
        cmd->add_option("--warmup", warmup_flag, "Warm-up fraction of the horizon");
        cmd->add_option("--trace", trace_flag, "Dump the event log here (one file per seed)");
        add_common(cmd, flags);
    }

    auto* verify = app.add_subcommand("verify", "Cross-oracle verification of the equilibrium machinery");
    std::string network_file;
    double cap = 2000;
    verify->add_option("--network", network_file, "Verify one network config file instead of the builtin suite");
    verify->add_option("--cap", cap, "State-space cap for enumeration");

    auto* extension = app.add_subcommand("extension", "Closed-form tables for the cool-down variant");
    std::string tau1_grid, triples;
    extension->add_option("--tau1-grid", tau1_grid, "First-window grid (a:b:step or comma list)");
    extension->add_option("--tau2", spec.tau2, "Fill-window length");
    extension->add_option("--tau3", spec.tau3, "Repeat-window length");
    extension->add_option("--triples", triples, "Explicit t1:t2:t3 triples separated by ';'");
    add_common(extension, flags);

    auto* reproduce = app.add_subcommand("reproduce", "Run a named preset config");
    std::string preset, presets_dir = "presets";
    reproduce->add_option("preset", preset, "Preset name (file <dir>/<name>.cfg)")->required();
    reproduce->add_option("--presets-dir", presets_dir, "Preset directory");
    add_common(reproduce, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (bound->parsed()) {
            spec.mode = qlim::ExperimentMode::bound;
            qlim::apply_setting(spec, "deltas", deltas);
            qlim::apply_setting(spec, "K_list", k_list);
            if (!curves.empty()) qlim::apply_setting(spec, "utilization_curves", curves);
        } else if (pmf->parsed()) {
            spec.mode = qlim::ExperimentMode::pmf;
        } else if (simulate->parsed() || sweep->parsed()) {
            if (!flags.config_file.empty()) spec = qlim::experiment_from_file(flags.config_file);
            spec.mode = simulate->parsed() ? qlim::ExperimentMode::simulate : qlim::ExperimentMode::sweep;
            if (!seeds_flag.empty()) qlim::apply_setting(spec, "seeds", seeds_flag);
            if (!horizon_flag.empty()) qlim::apply_setting(spec, "horizon", horizon_flag);
            if (!warmup_flag.empty()) qlim::apply_setting(spec, "warmup", warmup_flag);
            if (!trace_flag.empty()) qlim::apply_setting(spec, "trace", trace_flag);
        } else if (extension->parsed()) {
            spec.mode = qlim::ExperimentMode::extension;
            if (!tau1_grid.empty()) qlim::apply_setting(spec, "tau1_grid", tau1_grid);
            if (!triples.empty()) qlim::apply_setting(spec, "tau_triples", triples);
        } else if (verify->parsed()) {
            if (!network_file.empty()) {
                std::ifstream in(network_file);
                if (!in) throw qlim::ConfigError("cannot open network file " + network_file);
                const qlim::NetworkSpec net = qlim::network_from_config(in);
                const qlim::VerifyReport report = qlim::verify_single_network(net, static_cast<std::size_t>(cap));
                qlim::print_report(report, std::cout);
                return report.all_pass && report.max_residual <= 1e-8 ? 0 : 3;
            }
            spec.mode = qlim::ExperimentMode::verify;
            spec.state_cap = static_cast<std::size_t>(cap);
        } else if (reproduce->parsed()) {
            spec = qlim::experiment_from_file(presets_dir + "/" + preset + ".cfg");
            if (spec.output.empty()) spec.output = preset + ".csv";
        }

        apply_overrides(spec, flags);
        if (spec.seeds.empty()) spec.seeds = {1, 2, 3, 4, 5};
        return run(spec);
    } catch (const qlim::AuditError& e) {
        std::cerr << "audit failure: " << e.what() << "\n";
        return 3;
    } catch (const qlim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
