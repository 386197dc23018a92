#include <iostream>

#include <CLI11.hpp>

#include "koopman/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Noise-robust Koopman models: data generation, training and evaluation"};
    app.require_subcommand(1);

    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string mode = "predict";
    std::string checkpoint;
    std::string dataset;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Override the root seed");
        cmd->add_option("--out", out_dir, "Override the output directory");
    };
    auto* gen = app.add_subcommand("gen", "Simulate and corrupt training datasets");
    add_common(gen);
    auto* train = app.add_subcommand("train", "Train DRKN and fit the baseline operators");
    add_common(train);
    train->add_option("--dataset", dataset, "Train on this dataset directory only")->check(CLI::ExistingDirectory);
    auto* eval = app.add_subcommand("eval", "Evaluate trained models");
    add_common(eval);
    eval->add_option("--mode", mode, "predict | track | bias-mc | compare")
        ->check(CLI::IsMember({"predict", "track", "bias-mc", "compare"}));
    eval->add_option("--checkpoint", checkpoint, "Model file for predict/track")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? koopman::kExitOk : koopman::kExitUsage;
    }

    try {
        koopman::RunConfig cfg = koopman::RunConfig::load(config_file);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (gen->parsed()) {
            koopman::cmd_gen(cfg);
        } else if (train->parsed()) {
            koopman::cmd_train(cfg, dataset.empty() ? std::nullopt : std::optional<std::filesystem::path>(dataset));
        } else {
            return koopman::cmd_eval(cfg, mode,
                                     checkpoint.empty() ? std::nullopt : std::optional<std::filesystem::path>(checkpoint));
        }
    } catch (const koopman::Error& e) {
        std::cerr << "koopman: " << e.what() << '\n';
        return koopman::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "koopman: " << e.what() << '\n';
        return koopman::kExitUsage;
    }
    return koopman::kExitOk;
}
