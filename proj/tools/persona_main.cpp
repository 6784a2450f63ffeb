#include "persona/errors.hpp"
#include "persona/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"persona: psycholinguistic personality-detection pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::optional<int> threads_override;
    std::string cross_with;

    const std::vector<std::string> commands = {"synth", "extract", "select",     "align", "train",
                                               "eval",  "importance", "ablate", "sweep"};
    for (const auto& name : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration file (JSON)")->required();
        sub->add_option("--seed", seed_override, "override training.seed");
        sub->add_option("--out", out_override, "override paths.out_dir");
        sub->add_option("--threads", threads_override, "override worker thread count");
        if (name == "importance")
            sub->add_option("--cross-with", cross_with,
                            "second importance.csv for a paired cross report");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();

    persona::pipeline::RunConfig cfg;
    try {
        cfg = persona::pipeline::RunConfig::from_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    if (seed_override) {
        cfg.seed = *seed_override;
        cfg.seed_set = true;
    }
    if (out_override) cfg.out_dir = *out_override;
    if (threads_override) cfg.threads = *threads_override;

    return persona::pipeline::run_command(command, cfg, cross_with);
}
