#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paint/cli_commands.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string method;
    std::string scenario;
    std::string out_dir;
    std::string checkpoint;
    long long seed = -1;
    int batches = -1;
    int probe_every = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--method", method,
                        "paint | source-frozen | entropy-only | paint-no-prompt | "
                        "paint-no-encoder | paint-oracle");
        cmd->add_option("--scenario", scenario,
                        "severity5 | shuffled | gradual | clean | <file>.json");
        cmd->add_option("--seed", seed, "adaptation seed");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--checkpoint", checkpoint, "source checkpoint stem");
        cmd->add_option("--batches", batches, "batches per domain segment");
        cmd->add_option("--probe-every", probe_every,
                        "source-probe cadence in batches (0 = per segment)");
    }

    paint::RunConfig resolve() const {
        paint::RunConfig c =
            config_path.empty() ? paint::RunConfig{} : paint::load_config(config_path);
        if (!method.empty()) c.method = method;
        if (!scenario.empty()) c.scenario = scenario;
        if (!out_dir.empty()) c.out_dir = out_dir;
        if (!checkpoint.empty()) c.checkpoint = checkpoint;
        if (seed >= 0) c.adapt.seed = static_cast<unsigned long long>(seed);
        if (batches >= 0) c.batches_per_domain = batches;
        if (probe_every >= 0) c.probe_every = probe_every;
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-based continual test-time adaptation at desk scale"};
    app.require_subcommand(1);

    CommonFlags pretrain_flags, adapt_flags, sweep_flags;
    std::string sweep_parameter;
    std::vector<double> sweep_values;

    CLI::App* pretrain = app.add_subcommand("pretrain", "train the clean source model");
    pretrain_flags.attach(pretrain);

    CLI::App* adapt = app.add_subcommand("adapt", "run one method over a corruption stream");
    adapt_flags.attach(adapt);

    CLI::App* sweep = app.add_subcommand("sweep", "repeat a run across hyperparameter values");
    sweep_flags.attach(sweep);
    sweep->add_option("--parameter", sweep_parameter, "eta | phi | beta | prompt_len")
        ->required();
    sweep->add_option("--values", sweep_values, "values to sweep")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pretrain->parsed()) return paint::cmd_pretrain(pretrain_flags.resolve());
        if (adapt->parsed()) return paint::cmd_adapt(adapt_flags.resolve());
        if (sweep->parsed())
            return paint::cmd_sweep(sweep_flags.resolve(), sweep_parameter, sweep_values);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "error: no command given\n";
    return 1;
}
