#include "mvrds/runner.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <exception>

using namespace mvrds;

namespace {

void print_verdict(const RunResult& r) {
    for (const auto& [name, v] : r.suites) {
        fmt::print("{:<12} {}", name, v.pass ? "PASS" : "FAIL");
        if (!v.error.empty()) fmt::print("  ({})", v.error);
        fmt::print("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rough McKean-Vlasov flow simulator and verification runner"};
    app.require_subcommand(1);

    std::string config, output, run_dir, kind;
    std::size_t jobs = 1;

    auto* simulate = app.add_subcommand("simulate", "run the seed panel and write curves");
    auto* verify = app.add_subcommand("verify", "run the seed panel and the requested checks");
    for (auto* sub : {simulate, verify}) {
        sub->add_option("-c,--config", config, "scenario YAML file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", output, "output directory (overrides the config)");
        sub->add_option("-j,--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    }
    auto* emit = app.add_subcommand("emit", "write plot-ready tables from a finished run");
    emit->add_option("-r,--run-dir", run_dir, "directory of a finished run")->required();
    emit->add_option("-k,--kind", kind, "moments | defects | metric-curves")
        ->required()
        ->check(CLI::IsMember({"moments", "defects", "metric-curves"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (emit->parsed()) {
            fmt::print("{}\n", emit_plot_data(run_dir, plot_kind_from_string(kind)));
            return 0;
        }
        const ScenarioConfig cfg = load_scenario(config);
        RunOptions opt;
        opt.output_override = output;
        opt.jobs = jobs;
        opt.checks = verify->parsed();
        const RunResult r = run_scenario(cfg, opt);
        fmt::print("wrote {} files to {}\n", r.files.size(), resolve_output_dir(cfg, opt));
        print_verdict(r);
        return r.pass ? 0 : 1;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    }
}
