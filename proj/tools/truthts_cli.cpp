#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "truthts/truthts.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report_error(int code, const std::string& kind, const std::string& message, const std::string& key = {},
                 std::size_t line = 0) {
    nlohmann::json rec{{"error", kind}, {"message", message}, {"exit_code", code}};
    if (!key.empty()) rec["key"] = key;
    if (line > 0) rec["line"] = line;
    std::cerr << rec.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Truthful Thompson sampling for contextual linear bandits with strategic agents"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> out_dir;

    auto* run = app.add_subcommand("run", "Run an experiment and write regret/diagnostics CSVs and a manifest");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Override the base seed");
    run->add_option("--threads", threads, "Worker threads for replications")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides config 'output')");

    auto* presets = app.add_subcommand("presets", "Preset experiments");
    presets->require_subcommand(1);
    auto* presets_list = presets->add_subcommand("list", "List preset names");

    auto* validate = app.add_subcommand("validate", "Parse and validate a config without running it");
    validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    if (presets_list->parsed()) {
        for (const auto& name : truthts::preset_names())
            std::cout << name << '\t' << truthts::preset_description(name) << '\n';
        return kExitOk;
    }

    truthts::ExperimentConfig cfg;
    try {
        cfg = truthts::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        if (out_dir) cfg.output = *out_dir;
        const auto variants = truthts::expand_variants(cfg);
        if (validate->parsed()) {
            std::cout << "ok: " << variants.size() << " variant(s), " << cfg.policies.size() << " policy run(s), T = "
                      << cfg.horizon << ", " << cfg.replications << " replication(s)\n";
            return kExitOk;
        }
    } catch (const truthts::UnknownPreset& e) {
        return report_error(kExitConfig, "UnknownPreset", e.what(), e.key(), e.line());
    } catch (const truthts::ParseError& e) {
        return report_error(kExitConfig, "ParseError", e.what(), e.key(), e.line());
    } catch (const truthts::InvalidInstance& e) {
        return report_error(kExitConfig, "InvalidInstance", e.what());
    } catch (const truthts::PosteriorError& e) {
        return report_error(kExitConfig, "PosteriorError", e.what());
    } catch (const std::exception& e) {
        return report_error(kExitConfig, "ConfigError", e.what());
    }

    try {
        truthts::run_experiment(cfg, cfg.output, [](const std::string& variant, const std::string& policy) {
            std::cerr << "running " << variant << " / " << policy << '\n';
        });
        std::cerr << "wrote results to " << cfg.output << '\n';
    } catch (const truthts::IoError& e) {
        return report_error(kExitRuntime, "IoError", e.what());
    } catch (const std::exception& e) {
        return report_error(kExitRuntime, "RuntimeError", e.what());
    }
    return kExitOk;
}
