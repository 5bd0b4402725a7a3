#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jcc/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Joint coding/control of a controlled Markov source over a finite-rate channel"};
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out = ".";
    bool trace = false;
    int jobs = 1;
    std::vector<std::string> policy_files;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment file or preset name (paper_sim_A, paper_sim_B)")->required();
        sub->add_option("--seed", seed, "run only this seed");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--jobs", jobs, "parallel sweep cells")->check(CLI::PositiveNumber);
    };

    CLI::App* learn = app.add_subcommand("learn", "train Q-learning policies over the sweep");
    add_common(learn);
    learn->add_flag("--trace", trace, "also write trajectory CSVs");
    CLI::App* evaluate = app.add_subcommand("evaluate", "Monte-Carlo cost of learned policies");
    add_common(evaluate);
    evaluate->add_option("policies", policy_files, "policy files (default: scan --out)");
    CLI::App* diagnose = app.add_subcommand("diagnose", "filter-stability and ergodicity report");
    add_common(diagnose);
    CLI::App* vi = app.add_subcommand("value-iterate", "value iteration on the belief grid");
    add_common(vi);

    CLI11_PARSE(app, argc, argv);

    try {
        const jcc::ExperimentConfig cfg = jcc::load_experiment(config);
        jcc::RunOptions opts;
        opts.out_dir = out;
        opts.trace = trace;
        opts.jobs = jobs;
        for (CLI::App* sub : app.get_subcommands())
            if (sub->count("--seed") > 0) opts.seed = seed;

        if (learn->parsed()) return jcc::cmd_learn(cfg, opts, std::cout);
        if (evaluate->parsed()) {
            std::vector<std::filesystem::path> files(policy_files.begin(), policy_files.end());
            return jcc::cmd_evaluate(cfg, opts, files, std::cout);
        }
        if (diagnose->parsed()) return jcc::cmd_diagnose(cfg, opts, std::cout);
        return jcc::cmd_value_iterate(cfg, opts, std::cout);
    } catch (const std::exception& e) {
        return jcc::report_error(e, std::cerr);
    }
}
