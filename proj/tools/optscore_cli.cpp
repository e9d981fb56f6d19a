// optscore command-line front end: `run` and `validate` subcommands.

#include "optscore/cli.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

int report(const optscore::Diagnostics& d) {
    for (const auto& m : d.messages) std::cerr << "config error: " << m << '\n';
    return d.empty() ? kExitOk : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal score estimation and forecast coherence experiments"};
    app.require_subcommand(1);
    std::string config;
    std::string out_dir = "out";

    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("--config", config, "Experiment configuration (JSON) or a run manifest")->required();
    run->add_option("--out-dir", out_dir, "Directory for output files");

    auto* validate = app.add_subcommand("validate", "Check a config file without running it");
    validate->add_option("--config", config, "Experiment configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInvalid;
    }

    optscore::ExperimentConfig cfg;
    try {
        const auto raw = optscore::read_json_file(config);
        auto [parsed, diags] = optscore::parse_config(raw, std::filesystem::absolute(config).parent_path());
        if (validate->parsed()) {
            const int code = report(diags);
            if (code == kExitOk) std::cout << "ok\n";
            return code;
        }
        if (!diags.empty()) return report(diags);
        cfg = std::move(parsed);
    } catch (const optscore::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitInvalid;
    }

    try {
        const auto res = optscore::run_experiment(cfg, out_dir);
        for (const auto& f : res.outputs) std::cout << (std::filesystem::path(out_dir) / f).string() << '\n';
    } catch (const optscore::ExperimentError& e) {
        std::cerr << "runtime error (experiment, window " << e.window() << "): " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "runtime error (experiment " << cfg.echo.value("experiment", std::string("?")) << "): " << e.what()
                  << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
