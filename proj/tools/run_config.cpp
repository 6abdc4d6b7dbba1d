#include "run_config.hpp"

#include "precision_lab/portfolio.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace precision_lab::cli {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc{} || ptr != end) config_error(key + ": '" + text + "' is not a valid number");
    return value;
}

int parse_int(const std::string& key, const std::string& text, int lo) {
    const int v = parse_number<int>(key, text);
    if (v < lo) config_error(key + " must be >= " + std::to_string(lo));
    return v;
}

double parse_real(const std::string& key, const std::string& text, double lo, double hi) {
    const double v = parse_number<double>(key, text);
    if (!(v > lo && v < hi)) config_error(fmt::format("{} must lie in ({}, {})", key, lo, hi));
    return v;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

/// GGM base name of an id ("glasso2" -> "glasso"), empty for non-GGM ids.
std::string ggm_base(const std::string& id) {
    static const std::vector<std::string> bases{"glasso", "mb", "clime", "greedy", "hybridmb"};
    std::string base = id;
    if (!base.empty() && (base.back() == '1' || base.back() == '2')) base.pop_back();
    return std::find(bases.begin(), bases.end(), base) != bases.end() ? base : std::string{};
}

std::vector<std::string> valid_methods(const std::string& command, const std::string& experiment) {
    std::vector<std::string> ids = known_methods();
    if (command == "diagnose") {
        std::erase_if(ids, [](const std::string& id) { return ggm_base(id).empty(); });
    } else if (command == "synth") {
        if (experiment == "complexity") {
            ids = {"glasso", "mb", "clime", "greedy", "hybridmb"};
        } else {
            std::erase(ids, std::string("ewp"));
        }
        ids.push_back("oracle");
    }
    return ids;
}

std::string fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    return fmt::format("bytes={} hash={:016x}", bytes.size(), std::hash<std::string>{}(bytes));
}

}  // namespace

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConfigError:
        case ErrorKind::InvalidArgument:
        case ErrorKind::BadDimensions:
            return kExitConfig;
        case ErrorKind::ParseError:
        case ErrorKind::EmptyPanel:
        case ErrorKind::NonPositivePrice:
        case ErrorKind::HorizonTooLarge:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::TooFewRows:
        case ErrorKind::IncomparableSeries:
        case ErrorKind::SeriesTooShort:
            return kExitData;
        default:
            return kExitNumerical;
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        config_error(e.what());
    }
    std::map<std::string, std::string> out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) config_error("'" + path + "': key '" + section + "' is outside a [section]");
        for (const auto& [key, value] : body) out[section + "." + key] = trim(value.data());
    }
    return out;
}

const std::map<std::string, std::string>& schema_defaults() {
    static const std::map<std::string, std::string> defaults{
        {"run.seed", "0"},
        {"run.threads", "0"},
        {"run.out", "precision_lab_out"},
        {"data.returns", ""},
        {"data.prices", ""},
        {"data.intraday", ""},
        {"data.from", ""},
        {"data.to", ""},
        {"periods.normal_from", ""},
        {"periods.normal_to", ""},
        {"periods.stress_from", ""},
        {"periods.stress_to", ""},
        {"methods.list", ""},
        {"backtest.horizon", "daily"},
        {"backtest.window", "0"},
        {"backtest.step", "1"},
        {"tuning.criterion", "cv1"},
        {"tuning.search", "grid"},
        {"tuning.grid", ""},
        {"tuning.budget", "100"},
        {"tuning.folds", "5"},
        {"compare.losses", ""},
        {"compare.alpha", "0.05"},
        {"compare.n_boot", "5000"},
        {"compare.block_length", "0"},
        {"compare.spa_mean_block", "5"},
        {"compare.spa_benchmarks", ""},
        {"synth.experiment", "complexity"},
        {"synth.sizes", "20,40,80"},
        {"synth.d", "5"},
        {"synth.rho", "0.95"},
        {"synth.target", "0.25"},
        {"synth.trials", "3"},
        {"synth.criteria", "cv1,cv2"},
        {"synth.ladder_start", "32"},
        {"synth.cap", "65536"},
        {"synth.resolution", "0.0625"},
        {"synth.p", "100"},
        {"synth.sectors", "5"},
        {"synth.m", "150"},
        {"synth.reps", "100"},
    };
    return defaults;
}

std::map<std::string, std::vector<ParamMap>> read_grid_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open grid file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "grid file '" + path + "' is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
    }
    if (header.size() < 2 || header[0] != "method") config_error("grid file header must be method,<param>,...");
    std::map<std::string, std::vector<ParamMap>> grids;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (cells.size() > header.size()) config_error(fmt::format("{}:{}: too many cells", path, lineno));
        if (ggm_base(cells[0]) != cells[0]) {
            config_error(fmt::format("{}:{}: '{}' is not a GGM method", path, lineno, cells[0]));
        }
        ParamMap point;
        for (std::size_t k = 1; k < cells.size(); ++k) {
            if (!cells[k].empty()) point[header[k]] = parse_number<double>(header[k], cells[k]);
        }
        if (point.empty()) config_error(fmt::format("{}:{}: empty grid point", path, lineno));
        grids[cells[0]].push_back(std::move(point));
    }
    return grids;
}

TuneConfig tuning_for(const RunConfig& cfg, const std::string& id) {
    TuneConfig t = cfg.tuning;
    const auto it = cfg.grids.find(ggm_base(id));
    if (it != cfg.grids.end()) t.grid = it->second;
    return t;
}

RunConfig resolve_config(const std::string& command, const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> v = schema_defaults();
    std::string file_command;
    for (const auto* layer : {&file_values, &overrides}) {
        for (const auto& [key, value] : *layer) {
            if (key == "run.command") {
                file_command = value;
                continue;
            }
            if (!v.count(key)) config_error("unknown config key '" + key + "'");
            v[key] = trim(value);
        }
    }
    if (!file_command.empty() && file_command != command) {
        config_error("config was written for '" + file_command + "', not '" + command + "'");
    }

    RunConfig cfg;
    cfg.command = command;
    cfg.seed = parse_number<std::uint64_t>("run.seed", v["run.seed"]);
    cfg.threads = parse_int("run.threads", v["run.threads"], 0);
    cfg.out_dir = v["run.out"];
    if (cfg.out_dir.empty()) config_error("run.out must not be empty");

    cfg.returns_path = v["data.returns"];
    cfg.prices_path = v["data.prices"];
    cfg.intraday_path = v["data.intraday"];
    cfg.from = v["data.from"];
    cfg.to = v["data.to"];
    if (!cfg.returns_path.empty() && !cfg.prices_path.empty()) config_error("set data.returns or data.prices, not both");
    const bool needs_panel = command == "estimate" || command == "backtest" || command == "diagnose";
    if (needs_panel && cfg.returns_path.empty() && cfg.prices_path.empty()) {
        config_error(command + " needs data.returns or data.prices");
    }
    for (const char* name : {"normal", "stress"}) {
        const std::string from = v[std::string("periods.") + name + "_from"];
        const std::string to = v[std::string("periods.") + name + "_to"];
        if (!from.empty() || !to.empty()) cfg.periods.push_back({name, from, to});
    }

    cfg.synth.experiment = v["synth.experiment"];
    if (cfg.synth.experiment != "complexity" && cfg.synth.experiment != "frobenius") {
        config_error("synth.experiment must be complexity or frobenius");
    }
    cfg.methods = split_list(v["methods.list"]);
    const auto valid = valid_methods(command, cfg.synth.experiment);
    for (const auto& id : cfg.methods) {
        if (std::find(valid.begin(), valid.end(), id) == valid.end()) {
            config_error("unknown method '" + id + "'; valid identifiers: " + join(valid));
        }
    }

    cfg.plan.horizon = parse_horizon(v["backtest.horizon"]);
    const int window = parse_int("backtest.window", v["backtest.window"], 0);
    cfg.plan.window_length = window == 0 ? default_window(cfg.plan.horizon) : window;
    cfg.plan.step = parse_int("backtest.step", v["backtest.step"], 1);

    cfg.tuning.criterion = parse_criterion(v["tuning.criterion"]);
    cfg.tuning.search = parse_search(v["tuning.search"]);
    cfg.tuning.budget = parse_int("tuning.budget", v["tuning.budget"], 1);
    cfg.tuning.folds = parse_int("tuning.folds", v["tuning.folds"], 2);
    if (!v["tuning.grid"].empty()) cfg.grids = read_grid_file(v["tuning.grid"]);

    cfg.loss_files = split_list(v["compare.losses"]);
    cfg.mcs.alpha = parse_real("compare.alpha", v["compare.alpha"], 0.0, 1.0);
    cfg.mcs.n_boot = parse_int("compare.n_boot", v["compare.n_boot"], 100);
    cfg.mcs.seed = cfg.seed;
    if (const int b = parse_int("compare.block_length", v["compare.block_length"], 0); b > 0) cfg.mcs.block_length = b;
    cfg.spa.n_boot = cfg.mcs.n_boot;
    cfg.spa.seed = cfg.seed;
    cfg.spa.mean_block = parse_number<double>("compare.spa_mean_block", v["compare.spa_mean_block"]);
    if (cfg.spa.mean_block < 1.0) config_error("compare.spa_mean_block must be >= 1");
    cfg.spa_benchmarks = split_list(v["compare.spa_benchmarks"]);

    SynthConfig& s = cfg.synth;
    for (const auto& item : split_list(v["synth.sizes"])) s.sizes.push_back(parse_int("synth.sizes", item, 2));
    for (const auto& item : split_list(v["synth.criteria"])) s.criteria.push_back(parse_criterion(item));
    if (s.sizes.empty() || s.criteria.empty()) config_error("synth.sizes and synth.criteria must be non-empty");
    ComplexityOptions& c = s.complexity;
    c.d = parse_int("synth.d", v["synth.d"], 1);
    c.rho = parse_real("synth.rho", v["synth.rho"], 0.0, 1.0);
    c.target = parse_number<double>("synth.target", v["synth.target"]);
    c.trials = parse_int("synth.trials", v["synth.trials"], 1);
    c.ladder_start = parse_int("synth.ladder_start", v["synth.ladder_start"], 2);
    c.cap = parse_int("synth.cap", v["synth.cap"], 2);
    c.resolution = parse_real("synth.resolution", v["synth.resolution"], 0.0, 1.0);
    c.seed = cfg.seed;
    if (command == "synth" && s.experiment == "complexity") {
        for (int n : s.sizes) {
            if (n % 2 != 0 || (n / 2) % c.d != 0) {
                config_error(fmt::format("synth.d = {} must divide n/2 for every n in synth.sizes (n = {})", c.d, n));
            }
        }
    }
    s.p = parse_int("synth.p", v["synth.p"], 2);
    s.sectors = parse_int("synth.sectors", v["synth.sectors"], 1);
    s.m = parse_int("synth.m", v["synth.m"], 2);
    s.reps = parse_int("synth.reps", v["synth.reps"], 2);

    v.erase("run.out");
    v.erase("run.threads");
    cfg.resolved = std::move(v);
    return cfg;
}

std::string manifest_text(const RunConfig& cfg) {
    std::string out = fmt::format("# precision-lab {}\n", kVersion);
    for (const char* key : {"data.returns", "data.prices", "data.intraday", "tuning.grid"}) {
        const std::string& path = cfg.resolved.at(key);
        if (!path.empty()) out += fmt::format("# input {} {}\n", path, fingerprint(path));
    }
    for (const auto& path : cfg.loss_files) out += fmt::format("# input {} {}\n", path, fingerprint(path));
    out += fmt::format("\n[run]\ncommand = {}\nseed = {}\n", cfg.command, cfg.resolved.at("run.seed"));
    std::string section = "run";
    for (const auto& [key, value] : cfg.resolved) {
        if (key.rfind("run.", 0) == 0) continue;
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            out += fmt::format("\n[{}]\n", sec);
            section = sec;
        }
        out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
    }
    return out;
}

}  // namespace precision_lab::cli
