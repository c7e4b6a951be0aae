#include "paint/cli_commands.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace paint {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (allowed.find(key) == allowed.end())
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

std::filesystem::path RunConfig::checkpoint_stem() const {
    if (!checkpoint.empty()) return checkpoint;
    return std::filesystem::path(out_dir) / "source";
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check_keys(j,
               {"eta", "phi", "beta", "gamma", "alpha", "prompt_len", "shallow_blocks", "lr",
                "batch_size", "seed", "method", "scenario", "batches_per_domain", "probe_every",
                "stream_seed", "out_dir", "checkpoint", "pretrain"},
               "top level");
    RunConfig c;
    c.adapt.eta = j.value("eta", c.adapt.eta);
    c.adapt.phi = j.value("phi", c.adapt.phi);
    c.adapt.beta = j.value("beta", c.adapt.beta);
    c.adapt.gamma = j.value("gamma", c.adapt.gamma);
    c.adapt.alpha = j.value("alpha", c.adapt.alpha);
    c.adapt.prompt_len = j.value("prompt_len", c.adapt.prompt_len);
    c.adapt.shallow_blocks = j.value("shallow_blocks", c.adapt.shallow_blocks);
    c.adapt.lr = j.value("lr", c.adapt.lr);
    c.adapt.batch_size = j.value("batch_size", c.adapt.batch_size);
    c.adapt.seed = j.value("seed", c.adapt.seed);
    c.method = j.value("method", c.method);
    c.scenario = j.value("scenario", c.scenario);
    c.batches_per_domain = j.value("batches_per_domain", c.batches_per_domain);
    c.probe_every = j.value("probe_every", c.probe_every);
    c.stream_seed = j.value("stream_seed", c.stream_seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        check_keys(p,
                   {"train_count", "heldout_count", "epochs", "batch_size", "lr", "seed",
                    "min_accuracy"},
                   "pretrain");
        c.pretrain.train_count = p.value("train_count", c.pretrain.train_count);
        c.pretrain.heldout_count = p.value("heldout_count", c.pretrain.heldout_count);
        c.pretrain.epochs = p.value("epochs", c.pretrain.epochs);
        c.pretrain.batch_size = p.value("batch_size", c.pretrain.batch_size);
        c.pretrain.lr = p.value("lr", c.pretrain.lr);
        c.pretrain.seed = p.value("seed", c.pretrain.seed);
        c.pretrain.min_accuracy = p.value("min_accuracy", c.pretrain.min_accuracy);
    }
    return c;
}

nlohmann::json RunConfig::to_json() const {
    return {{"eta", adapt.eta},
            {"phi", adapt.phi},
            {"beta", adapt.beta},
            {"gamma", adapt.gamma},
            {"alpha", adapt.alpha},
            {"prompt_len", adapt.prompt_len},
            {"shallow_blocks", adapt.shallow_blocks},
            {"lr", adapt.lr},
            {"batch_size", adapt.batch_size},
            {"seed", adapt.seed},
            {"method", method},
            {"scenario", scenario},
            {"batches_per_domain", batches_per_domain},
            {"probe_every", probe_every},
            {"stream_seed", stream_seed},
            {"out_dir", out_dir},
            {"checkpoint", checkpoint},
            {"pretrain",
             {{"train_count", pretrain.train_count},
              {"heldout_count", pretrain.heldout_count},
              {"epochs", pretrain.epochs},
              {"batch_size", pretrain.batch_size},
              {"lr", pretrain.lr},
              {"seed", pretrain.seed},
              {"min_accuracy", pretrain.min_accuracy}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    return RunConfig::from_json(nlohmann::json::parse(in));
}

Scenario resolve_scenario(const RunConfig& config) {
    if (config.scenario == "severity5") return build_severity5_scenario(config.batches_per_domain);
    if (config.scenario == "shuffled")
        return build_shuffled_scenario(config.batches_per_domain, config.stream_seed);
    if (config.scenario == "gradual")
        return build_gradual_scenario(all_corruption_kinds(), config.batches_per_domain);
    if (config.scenario == "clean") return build_clean_scenario(config.batches_per_domain);
    if (config.scenario.size() > 5 &&
        config.scenario.substr(config.scenario.size() - 5) == ".json") {
        std::ifstream in(config.scenario, std::ios::binary);
        if (!in) throw std::runtime_error("scenario: cannot open " + config.scenario);
        return scenario_from_json(nlohmann::json::parse(in));
    }
    throw std::invalid_argument("scenario: unknown name '" + config.scenario +
                                "' (expected severity5, shuffled, gradual, clean, or a .json file)");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_pretrain(const RunConfig& config) {
    std::filesystem::create_directories(config.out_dir);
    const auto stem = config.checkpoint_stem();
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

    const PretrainResult result = pretrain_source(EncoderArch{}, config.pretrain);

    nlohmann::json meta;
    meta["clean_accuracy"] = result.clean_accuracy;
    meta["pretrain"] = {{"train_count", config.pretrain.train_count},
                        {"heldout_count", config.pretrain.heldout_count},
                        {"epochs", config.pretrain.epochs},
                        {"batch_size", config.pretrain.batch_size},
                        {"lr", config.pretrain.lr},
                        {"seed", config.pretrain.seed}};
    save_encoder(stem, result.params, meta);

    nlohmann::json report;
    report["checkpoint"] = stem.string();
    report["clean_accuracy"] = result.clean_accuracy;
    report["parameter_fingerprint"] = params_fingerprint(result.params);
    auto out = open_out(std::filesystem::path(config.out_dir) / "pretrain_report.json");
    out << report.dump(2) << '\n';
    return 0;
}

namespace {

PretrainConfig pretrain_config_from_metadata(const nlohmann::json& meta) {
    PretrainConfig pc;
    if (meta.contains("pretrain")) {
        const auto& p = meta.at("pretrain");
        pc.train_count = p.value("train_count", pc.train_count);
        pc.heldout_count = p.value("heldout_count", pc.heldout_count);
        pc.epochs = p.value("epochs", pc.epochs);
        pc.batch_size = p.value("batch_size", pc.batch_size);
        pc.lr = p.value("lr", pc.lr);
        pc.seed = p.value("seed", pc.seed);
    }
    return pc;
}

void write_metrics_files(const RunConfig& config, const RunMetrics& rm) {
    std::filesystem::create_directories(config.out_dir);
    const std::filesystem::path dir(config.out_dir);

    {
        auto out = open_out(dir / "per_batch.csv");
        out << "batch,domain,selected_entry,was_new,reliability,loss_mi,loss_ic,loss_total,"
               "pseudo_labels,batch_accuracy,prompt_count,source_probe\n";
        for (const auto& r : rm.batches) {
            out << r.batch_index << ',' << r.domain_id << ',' << r.outcome.selected_entry << ','
                << (r.outcome.was_new ? 1 : 0) << ',';
            if (r.outcome.reliability) out << format_double(*r.outcome.reliability);
            out << ',' << format_double(r.outcome.loss_mi) << ','
                << format_double(r.outcome.loss_ic) << ',' << format_double(r.outcome.loss_total)
                << ',' << r.outcome.pseudo_label_count << ',' << format_double(r.accuracy) << ','
                << r.outcome.prompt_count_after << ',';
            if (r.source_probe) out << format_double(*r.source_probe);
            out << '\n';
        }
    }
    {
        auto out = open_out(dir / "per_domain.csv");
        out << "domain,sample_count,correct,accuracy\n";
        for (const auto& d : rm.per_domain)
            out << d.domain_id << ',' << d.sample_count << ',' << d.correct << ','
                << format_double(d.accuracy) << '\n';
    }
    {
        nlohmann::json summary;
        summary["config"] = config.to_json();
        nlohmann::json metrics;
        metrics["average_accuracy"] = rm.average_accuracy;
        metrics["matching_accuracy"] =
            rm.matching_accuracy ? nlohmann::json(*rm.matching_accuracy) : nlohmann::json();
        metrics["final_prompt_count"] = rm.final_prompt_count;
        metrics["final_source_probe"] =
            rm.final_source_probe ? nlohmann::json(*rm.final_source_probe) : nlohmann::json();
        metrics["source_probes"] = rm.source_probes;
        metrics["total_batches"] = rm.batches.size();
        metrics["total_samples"] =
            static_cast<long long>(rm.batches.size()) * config.adapt.batch_size;
        metrics["sgd_steps"] = rm.sgd_calls;
        summary["metrics"] = metrics;
        auto out = open_out(dir / "summary.json");
        out << summary.dump(2) << '\n';
    }
}

RunMetrics run_from_config(const RunConfig& config) {
    const EncoderParams source = load_encoder(config.checkpoint_stem());
    const LoadedCheckpoint ck = load_tensors(config.checkpoint_stem());
    const auto held_out = make_heldout_set(pretrain_config_from_metadata(ck.metadata));

    RunOptions options;
    options.method = method_from_string(config.method);
    options.scenario = resolve_scenario(config);
    options.config = config.adapt;
    options.probe_every = config.probe_every;
    options.stream_seed = config.stream_seed;
    return run_method(source, options, held_out);
}

}  // namespace

int cmd_adapt(const RunConfig& config) {
    write_metrics_files(config, run_from_config(config));
    return 0;
}

int cmd_sweep(const RunConfig& config, const std::string& parameter,
              const std::vector<double>& values) {
    if (parameter != "eta" && parameter != "phi" && parameter != "beta" &&
        parameter != "prompt_len")
        throw std::invalid_argument("sweep: unknown parameter '" + parameter +
                                    "' (expected eta, phi, beta, or prompt_len)");
    if (values.empty()) throw std::invalid_argument("sweep: no values given");

    std::filesystem::create_directories(config.out_dir);
    auto out = open_out(std::filesystem::path(config.out_dir) / "sweep.csv");
    out << "parameter,value,average_accuracy,prompt_count\n";
    for (double value : values) {
        RunConfig c = config;
        if (parameter == "eta") c.adapt.eta = value;
        if (parameter == "phi") c.adapt.phi = value;
        if (parameter == "beta") c.adapt.beta = value;
        if (parameter == "prompt_len") {
            c.adapt.prompt_len = static_cast<int>(value);
            if (static_cast<double>(c.adapt.prompt_len) != value)
                throw std::invalid_argument("sweep: prompt_len values must be integers");
        }
        const RunMetrics rm = run_from_config(c);
        out << parameter << ',' << format_double(value) << ','
            << format_double(rm.average_accuracy) << ',' << rm.final_prompt_count << '\n';
    }
    return 0;
}

}  // namespace paint
