#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "paint/adapter.hpp"
#include "paint/stream_bench.hpp"

namespace paint {

// Front-end plumbing shared by the binary and the tests: config loading with
// strict key checking, scenario resolution, and the three commands.

struct RunConfig {
    AdaptationConfig adapt;  // eta/phi/beta/gamma/alpha/prompt_len/shallow_blocks/lr/batch/seed
    std::string method = "paint";
    std::string scenario = "severity5";  // severity5 | shuffled | gradual | clean | <file>.json
    int batches_per_domain = 20;
    int probe_every = 0;  // 0 = probe after each domain segment
    unsigned long long stream_seed = 1000;
    std::string out_dir = "runs/out";
    std::string checkpoint;  // stem; empty = <out_dir>/source
    PretrainConfig pretrain;

    std::filesystem::path checkpoint_stem() const;
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

RunConfig load_config(const std::filesystem::path& path);

// Maps a scenario name (or a .json file of [{kind, severity, batches}, ...])
// to a concrete segment list.
Scenario resolve_scenario(const RunConfig& config);

// Shortest-exact decimal text for doubles; the CSV number format.
std::string format_double(double v);

// Trains the source model, writes <checkpoint>.json/.bin and a clean-accuracy
// report at <out_dir>/pretrain_report.json.
int cmd_pretrain(const RunConfig& config);

// Runs one method over the scenario; writes per_batch.csv, per_domain.csv and
// summary.json into out_dir.
int cmd_adapt(const RunConfig& config);

// One adaptation run per value of the swept parameter
// (eta | phi | beta | prompt_len); writes sweep.csv into out_dir.
int cmd_sweep(const RunConfig& config, const std::string& parameter,
              const std::vector<double>& values);

}  // namespace paint
