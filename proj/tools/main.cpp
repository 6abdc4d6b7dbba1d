#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>

using namespace precision_lab;
using namespace precision_lab::cli;

namespace {

struct FlagBinding {
    const char* flag;
    const char* key;
    const char* help;
};

const FlagBinding kFlags[] = {
    {"--out", "run.out", "Output directory"},
    {"--seed", "run.seed", "Master RNG seed"},
    {"--threads", "run.threads", "Worker-pool size (0: PRECISION_LAB_THREADS, then all cores)"},
    {"--data", "data.returns", "Returns panel (date,TICKER,...)"},
    {"--prices", "data.prices", "Price panel; log-returns are taken"},
    {"--intraday", "data.intraday", "Intra-day returns for daily losses"},
    {"--methods", "methods.list", "Comma-separated method identifiers"},
    {"--horizon", "backtest.horizon", "daily, weekly or monthly"},
    {"--window", "backtest.window", "Training window length (0: horizon default)"},
    {"--criterion", "tuning.criterion", "cv1 or cv2"},
    {"--search", "tuning.search", "grid or nm"},
    {"--grid", "tuning.grid", "Grid file: method,<param>,... rows"},
    {"--budget", "tuning.budget", "Nelder-Mead evaluation budget"},
    {"--alpha", "compare.alpha", "MCS size"},
    {"--n-boot", "compare.n_boot", "Bootstrap replications"},
    {"--experiment", "synth.experiment", "complexity or frobenius"},
};

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_st("precision-lab"));

    CLI::App app{"Covariance and precision estimation, minimum-variance backtests and method comparison"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    bool quiet = false;
    app.add_option("--config", config_path, "key = value config file with [sections]");
    app.add_option("--set", sets, "section.key=value override (repeatable)");
    app.add_flag("-q,--quiet", quiet, "Log warnings and errors only");
    std::map<std::string, std::string> flag_values;
    std::vector<std::pair<CLI::Option*, const char*>> flag_options;
    for (const auto& f : kFlags) flag_options.emplace_back(app.add_option(f.flag, flag_values[f.key], f.help), f.key);

    std::map<std::string, CLI::App*> subs;
    for (const char* name : {"estimate", "backtest", "compare", "synth", "diagnose"}) {
        subs[name] = app.add_subcommand(name)->fallthrough();
    }
    subs["estimate"]->description("Fit each method on the panel and write matrices, weights and diagnostics");
    subs["backtest"]->description("Rolling-window minimum-variance backtest; writes loss series");
    subs["compare"]->description("Model Confidence Set and SPA on loss files");
    subs["synth"]->description("Synthetic structure-recovery or Frobenius-error experiment");
    subs["diagnose"]->description("Tuned GGM diagnostics table");
    std::vector<std::string> loss_files;
    subs["compare"]->add_option("losses", loss_files, "Loss files (timestamp,method,loss)");
    std::string manifest;
    CLI::App* replay = app.add_subcommand("replay", "Re-run from a manifest.ini")->fallthrough();
    replay->add_option("manifest", manifest, "Manifest written by an earlier run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);

    try {
        std::map<std::string, std::string> overrides;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "--set expects section.key=value: " + kv);
            overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        for (const auto& [opt, key] : flag_options) {
            if (opt->count() > 0) overrides[key] = flag_values[key];
        }
        if (!loss_files.empty()) {
            std::string joined;
            for (const auto& f : loss_files) joined += (joined.empty() ? "" : ",") + f;
            overrides["compare.losses"] = joined;
        }

        std::string command;
        std::map<std::string, std::string> file_values;
        if (replay->parsed()) {
            if (!config_path.empty()) throw Error(ErrorKind::ConfigError, "replay takes the manifest instead of --config");
            file_values = read_config_file(manifest);
            const auto it = file_values.find("run.command");
            if (it == file_values.end()) throw Error(ErrorKind::ConfigError, "'" + manifest + "' has no run.command");
            command = it->second;
        } else {
            for (const auto& [name, sub] : subs) {
                if (sub->parsed()) command = name;
            }
            if (!config_path.empty()) file_values = read_config_file(config_path);
        }
        const RunConfig cfg = resolve_config(command, file_values, overrides);
        run_command(cfg);
        return kExitOk;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitNumerical;
    }
}
