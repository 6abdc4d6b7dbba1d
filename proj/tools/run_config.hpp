#pragma once

#include "precision_lab/compare.hpp"
#include "precision_lab/ingest.hpp"
#include "precision_lab/synthetic.hpp"
#include "precision_lab/tuning.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace precision_lab::cli {

inline constexpr const char* kVersion = PRECISION_LAB_VERSION;

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind);

struct Period {
    std::string name;
    std::string from;
    std::string to;
};

struct SynthConfig {
    std::string experiment = "complexity";
    std::vector<int> sizes;
    std::vector<Criterion> criteria;
    ComplexityOptions complexity;
    int p = 100;
    int sectors = 5;
    Index m = 150;
    int reps = 100;
};

struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir;

    std::string returns_path;
    std::string prices_path;
    std::string intraday_path;
    std::string from;
    std::string to;
    std::vector<Period> periods;

    /// Empty: the command's default list.
    std::vector<std::string> methods;
    RollingWindowPlan plan;
    TuneConfig tuning;
    /// Per-GGM grids from tuning.grid, keyed by base method name.
    std::map<std::string, std::vector<ParamMap>> grids;

    std::vector<std::string> loss_files;
    McsOptions mcs;
    SpaOptions spa;
    std::vector<std::string> spa_benchmarks;

    SynthConfig synth;

    /// Every schema key with its effective value, except run.out and run.threads.
    std::map<std::string, std::string> resolved;
};

/// Flat "section.key" -> value map. Parses key = value lines under [section] headers.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Documented keys with their defaults.
const std::map<std::string, std::string>& schema_defaults();

/// Merges defaults, file values and overrides (later wins), rejects unknown keys and validates
/// every value. Throws ConfigError.
RunConfig resolve_config(const std::string& command, const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& overrides);

/// Manifest text: version and input fingerprints as comments, then the resolved config in the
/// config-file format so it can be replayed.
std::string manifest_text(const RunConfig& cfg);

std::vector<std::string> split_list(const std::string& text);

/// Tuning settings for one method id: the shared config with that method's grid.
TuneConfig tuning_for(const RunConfig& cfg, const std::string& id);

/// Reads "method,param1,param2,..." rows; empty cells are omitted from that row's point.
std::map<std::string, std::vector<ParamMap>> read_grid_file(const std::string& path);

}  // namespace precision_lab::cli
