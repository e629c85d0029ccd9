// svemp: simulate stochastic Volterra equations and check them.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
// 3 corrupt archive, 4 replay mismatch, 5 any other error.

#include <cstdio>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "svemp/cli/pipeline.hpp"

namespace {

enum Exit { kPass = 0, kFail = 1, kConfig = 2, kCorrupt = 3, kMismatch = 4, kError = 5 };

void print_reports(const svemp::cli::RunResult& res) {
    for (const auto& line : res.log) std::printf("log: %s\n", line.c_str());
    std::printf("%-20s %s\n", "check", "result");
    for (const auto& r : res.reports) {
        std::printf("%-20s %s", r.check.c_str(), r.passed ? "PASS" : "FAIL");
        if (r.body.contains("error")) std::printf("  (%s)", r.body["error"].get<std::string>().c_str());
        std::printf("\n");
    }
    std::printf("output: %s\n", res.out_dir.c_str());
    std::printf("overall: %s\n", res.passed ? "PASS" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic Volterra equations: simulation and martingale-problem checks"};
    app.require_subcommand(1);

    unsigned threads = 1;
    std::string out, format, path;
    std::uint64_t seed = 0;
    app.add_option("--threads", threads, "worker threads (results do not depend on it)")
        ->check(CLI::Range(1u, 1024u));

    auto* run = app.add_subcommand("run", "simulate and run the configured checks");
    run->add_option("config", path, "configuration file")->required();
    auto* check_kernel = app.add_subcommand("check-kernel", "kernel assumptions only");
    check_kernel->add_option("config", path, "configuration file")->required();
    auto* demo = app.add_subcommand("mollify-demo", "mollified coefficient properties");
    demo->add_option("config", path, "configuration file")->required();
    auto* replay = app.add_subcommand("replay", "re-run an archive and compare statistics");
    replay->add_option("archive", path, "run archive (run.svarc)")->required();

    for (auto* sub : {run, check_kernel, demo}) {
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "override the configured seed");
        sub->add_option("--format", format, "report format")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    }
    replay->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kPass : kConfig;
    }

    namespace cli = svemp::cli;
    cli::RunOptions opt;
    opt.threads = threads;
    auto* active = app.get_subcommands().front();
    if (active != replay) {
        if (active->count("--out")) opt.out = out;
        if (active->count("--seed")) opt.seed = seed;
        if (active->count("--format")) opt.formats = std::set<std::string>{format};
    }

    try {
        if (active == run) {
            const auto res = cli::run_pipeline(cli::load_config(path), opt);
            print_reports(res);
            return res.passed ? kPass : kFail;
        }
        if (active == check_kernel || active == demo) {
            auto cfg = cli::apply_overrides(cli::load_config(path), opt);
            cli::RunResult res;
            res.out_dir = cli::detail::out_dir(cfg, opt);
            res.reports.push_back(active == demo ? cli::mollify_report(cfg) : cli::kernel_report(cfg));
            res.passed = res.reports.front().passed;
            cli::write_reports(res, cfg, opt, false);
            print_reports(res);
            return res.passed ? kPass : kFail;
        }
        const auto archive = cli::read_archive(path);
        const auto res = cli::replay_archive(archive, threads);
        if (!res.match) {
            std::fprintf(stderr, "Mismatch: %s\n", res.first_difference.c_str());
            return kMismatch;
        }
        std::printf("replay matches: %zu statistics bitwise identical\n", res.recorded.size());
        return kPass;
    } catch (const svemp::ConfigError& e) {
        std::fprintf(stderr, "ConfigError: %s\n", e.what());
        return kConfig;
    } catch (const svemp::ArchiveCorrupt& e) {
        std::fprintf(stderr, "ArchiveCorrupt: %s\n", e.what());
        return kCorrupt;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kError;
    }
}
