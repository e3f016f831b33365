// qbm_main.cpp — command-line front end: one verb per experiment kind

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "qbm/config.hpp"
#include "qbm/errors.hpp"
#include "qbm/runner.hpp"

namespace {

struct Flags {
    std::string config;
    std::string output_dir;
    std::string seed;
    std::size_t threads{0};
    double tolerance_scale{0.0};
    bool quiet{false};
};

void add_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("-c,--config", f.config, "experiment configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--output-dir", f.output_dir, "output directory (overrides experiment.output_dir)");
    cmd->add_option("--seed", f.seed, "64-bit unsigned seed (overrides experiment.seed)");
    cmd->add_option("-j,--threads", f.threads, "worker threads; results do not depend on it")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
    cmd->add_option("--tolerance-scale", f.tolerance_scale, "multiplier for every assertion tolerance")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("-q,--quiet", f.quiet, "print nothing but errors");
}

void print_keys() {
    for (const auto& k : qbm::config_schema()) {
        std::cout << k.name << (k.required ? " (required)" : "");
        if (!k.default_value.empty()) std::cout << " [default " << k.default_value << "]";
        std::cout << "\n    " << k.description << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qbm: stochastic quantum Brownian motion experiments"};
    app.require_subcommand(0, 1);
    bool keys = false;
    app.add_flag("--list-keys", keys, "print every configuration key with its default");

    Flags flags;
    std::map<CLI::App*, std::string> verbs;
    for (const auto& kind : qbm::experiment_kind_names()) {
        auto* cmd = app.add_subcommand(kind, "run the " + kind + " experiment");
        add_flags(cmd, flags);
        verbs[cmd] = kind;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (keys) {
        print_keys();
        return 0;
    }
    std::string verb;
    for (const auto& [cmd, name] : verbs)
        if (cmd->parsed()) verb = name;
    if (verb.empty()) {
        std::cerr << app.help();
        return 2;
    }

    qbm::ConfigOverrides ov{{"experiment.kind", verb}};
    if (!flags.output_dir.empty()) ov["experiment.output_dir"] = flags.output_dir;
    if (!flags.seed.empty()) ov["experiment.seed"] = flags.seed;
    if (flags.threads) ov["experiment.threads"] = std::to_string(flags.threads);
    if (flags.tolerance_scale > 0.0) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", flags.tolerance_scale);
        ov["experiment.tolerance_scale"] = buf;
    }

    qbm::ExperimentConfig cfg;
    try {
        cfg = qbm::parse_config(flags.config, ov);
    } catch (const qbm::Error& e) {
        std::cerr << "qbm: configuration error: " << e.what() << '\n';
        return 2;
    }
    try {
        const auto report = qbm::execute(cfg, flags.quiet ? nullptr : &std::cout);
        if (!report.failure.empty())
            std::cerr << "qbm: error in stage '" << report.failed_stage << "': " << report.failure << '\n';
        return report.exit_code();
    } catch (const qbm::Error& e) {
        std::cerr << "qbm: " << e.what() << '\n';
        return qbm::exit_code_for(e);
    }
}
