#include "commands.hpp"

#include "precision_lab/diagnostics.hpp"
#include "precision_lab/parallel.hpp"
#include "precision_lab/portfolio.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace precision_lab::cli {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kGgmBases{"glasso", "mb", "clime", "greedy", "hybridmb"};

/// Shortest round-trip decimal; identical bytes for identical doubles.
std::string num(double v) { return fmt::format("{}", v); }

void write_text(const RunConfig& cfg, const std::string& name, const std::string& text) {
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path.string() + "'");
    spdlog::info("wrote {}", path.string());
}

void write_manifest(const RunConfig& cfg) { write_text(cfg, "manifest.ini", manifest_text(cfg)); }

std::vector<std::string> methods_or(const RunConfig& cfg, std::vector<std::string> fallback) {
    return cfg.methods.empty() ? fallback : cfg.methods;
}

ReturnsMatrix load_data(const RunConfig& cfg) {
    ReturnsMatrix r = cfg.prices_path.empty() ? load_returns(cfg.returns_path) : log_returns(load_prices(cfg.prices_path));
    if (!cfg.from.empty() || !cfg.to.empty()) r = filter_dates(r, cfg.from, cfg.to);
    spdlog::info("panel: {} periods x {} assets", r.periods(), r.assets());
    return r;
}

std::string matrix_text(const MatrixXd& m, const std::vector<std::string>& tickers) {
    std::string out = "ticker";
    for (const auto& t : tickers) out += "," + t;
    out += "\n";
    for (Index i = 0; i < m.rows(); ++i) {
        out += tickers[static_cast<std::size_t>(i)];
        for (Index j = 0; j < m.cols(); ++j) out += "," + num(m(i, j));
        out += "\n";
    }
    return out;
}

std::string params_text(const ParamMap& params) {
    std::string out;
    for (const auto& [k, v] : params) out += (out.empty() ? "" : ";") + k + "=" + num(v);
    return out;
}

std::string estimate_summary(const Estimate& est) {
    if (const auto* p = std::get_if<PrecisionEstimate>(&est)) {
        return fmt::format("precision,{},{}", params_text(p->hyperparams), p->degenerate ? "degenerate" : "");
    }
    const auto& c = std::get<CovarianceEstimate>(est);
    ParamMap params;
    if (c.intensity) params["intensity"] = *c.intensity;
    if (c.threshold) params["threshold"] = *c.threshold;
    if (c.min_eigenvalue) params["min_eigenvalue"] = *c.min_eigenvalue;
    return fmt::format("covariance,{},", params_text(params));
}

/// Fits every method; writes estimates.csv, diagnostics for precision estimates and, when asked,
/// the matrices and minimum-variance weights.
void fit_and_report(const RunConfig& cfg, const ReturnsMatrix& r, const std::vector<std::string>& methods,
                    bool write_matrices) {
    std::string weights = "method,ticker,weight\n";
    std::string summary = "method,kind,parameters,flags\n";
    std::vector<std::pair<std::string, PrecisionDiagnostics>> diag;
    for (const auto& id : methods) {
        spdlog::info("fitting {}", id);
        PortfolioWeights w;
        if (id == "ewp") {
            w = equal_weights(r.assets());
            summary += "ewp,none,,\n";
        } else {
            TuneConfig tuning = tuning_for(cfg, id);
            tuning.threads = resolve_threads(cfg.threads);
            TuneResult tuned;
            const Estimate est = fit_method(id, r, tuning, &tuned);
            summary += id + "," + estimate_summary(est) + "\n";
            if (const auto* p = std::get_if<PrecisionEstimate>(&est)) {
                diag.emplace_back(id, summarize_precision(*p, tuned));
                if (write_matrices) write_text(cfg, "theta_" + id + ".csv", matrix_text(p->matrix, r.tickers()));
            } else if (write_matrices) {
                write_text(cfg, "sigma_" + id + ".csv",
                           matrix_text(std::get<CovarianceEstimate>(est).matrix, r.tickers()));
            }
            w = min_variance_weights(est);
        }
        for (Index i = 0; i < r.assets(); ++i) {
            weights += fmt::format("{},{},{}\n", id, r.tickers()[static_cast<std::size_t>(i)], num(w.weights(i)));
        }
    }
    write_text(cfg, "estimates.csv", summary);
    if (write_matrices) write_text(cfg, "weights.csv", weights);
    if (!diag.empty()) write_text(cfg, "diagnostics.csv", format_diagnostics_table(diag));
}

std::string loss_text(const std::vector<LossSeries>& series) {
    std::string out = "timestamp,method,loss\n";
    for (const auto& s : series) {
        for (std::size_t t = 0; t < s.losses.size(); ++t) {
            out += fmt::format("{},{},{}\n", s.timestamps[t], s.method, num(s.losses[t]));
        }
    }
    return out;
}

}  // namespace

std::vector<LossSeries> read_loss_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("timestamp,method,loss", 0) != 0) {
        throw Error(ErrorKind::ParseError, "'" + path + "' lacks the timestamp,method,loss header");
    }
    std::vector<LossSeries> out;
    std::map<std::string, std::size_t> slot;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string stamp, method, loss;
        if (!std::getline(ss, stamp, ',') || !std::getline(ss, method, ',') || !std::getline(ss, loss)) {
            throw Error(ErrorKind::ParseError, fmt::format("{}:{}: expected three cells", path, lineno));
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(loss, &used);
            if (used != loss.size()) throw std::invalid_argument(loss);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, fmt::format("{}:{}: bad loss '{}'", path, lineno, loss));
        }
        auto [it, fresh] = slot.emplace(method, out.size());
        if (fresh) out.push_back({method, {}, {}});
        out[it->second].losses.push_back(value);
        out[it->second].timestamps.push_back(stamp);
    }
    if (out.empty()) throw Error(ErrorKind::EmptyPanel, "'" + path + "' has no loss rows");
    return out;
}

void cmd_estimate(const RunConfig& cfg) {
    const ReturnsMatrix r = load_data(cfg);
    fit_and_report(cfg, r, methods_or(cfg, {"sample"}), true);
    write_manifest(cfg);
}

void cmd_diagnose(const RunConfig& cfg) {
    const ReturnsMatrix r = load_data(cfg);
    fit_and_report(cfg, r, methods_or(cfg, kGgmBases), false);
    write_manifest(cfg);
}

void cmd_backtest(const RunConfig& cfg) {
    const ReturnsMatrix daily = load_data(cfg);
    std::optional<IntradayReturns> intraday;
    if (!cfg.intraday_path.empty()) intraday = load_intraday(cfg.intraday_path);
    const auto ids = methods_or(cfg, {"sample", "lwl", "rblw", "oas", "bdl", "lwnl", "hard", "soft", "adaptive",
                                      "rie", "ewp"});
    std::vector<BacktestMethod> methods;
    for (const auto& id : ids) {
        // Parallelism sits at the window/method level; inner tuning stays serial.
        TuneConfig tuning = tuning_for(cfg, id);
        tuning.threads = 1;
        methods.push_back(make_method(id, tuning));
    }
    std::vector<Period> periods = cfg.periods;
    if (periods.empty()) periods.push_back({"full", "", ""});
    for (const auto& period : periods) {
        BacktestInput input{period.from.empty() && period.to.empty() ? daily : filter_dates(daily, period.from, period.to),
                            cfg.plan, intraday ? &*intraday : nullptr, resolve_threads(cfg.threads)};
        spdlog::info("backtest {}: {} periods, window {}, horizon {}", period.name, input.daily.periods(),
                     cfg.plan.window_length, to_string(cfg.plan.horizon));
        const auto series = backtest(input, methods);
        write_text(cfg, cfg.periods.empty() ? "losses.csv" : "losses_" + period.name + ".csv", loss_text(series));
    }
    write_manifest(cfg);
}

void cmd_compare(const RunConfig& cfg) {
    if (cfg.loss_files.empty()) throw Error(ErrorKind::ConfigError, "compare needs loss files (compare.losses)");
    std::vector<LossSeries> series;
    for (const auto& path : cfg.loss_files) {
        for (auto& s : read_loss_file(path)) {
            for (const auto& seen : series) {
                if (seen.method == s.method) s.method += "@" + fs::path(path).stem().string();
            }
            series.push_back(std::move(s));
        }
    }
    for (const auto& s : series) {
        if (s.timestamps != series.front().timestamps) {
            throw Error(ErrorKind::IncomparableSeries,
                        "'" + s.method + "' is not aligned with '" + series.front().method + "'");
        }
    }
    McsOptions mcs = cfg.mcs;
    mcs.threads = resolve_threads(cfg.threads);
    write_text(cfg, "mcs.csv", format_mcs_report(mcs_report(series, mcs)));

    SpaOptions spa = cfg.spa;
    spa.threads = mcs.threads;
    std::string text = "Benchmark,Statistic,p_lower,p_consistent,p_upper\n";
    std::vector<std::string> benchmarks = cfg.spa_benchmarks;
    if (benchmarks.empty()) {
        for (const auto& s : series) benchmarks.push_back(s.method);
    }
    if (series.size() >= 2) {
        for (const auto& b : benchmarks) {
            const SpaResult r = spa_test(series, b, spa);
            text += fmt::format("{},{},{},{},{}\n", b, num(r.statistic), num(r.p_lower), num(r.p_value), num(r.p_upper));
        }
    }
    write_text(cfg, "spa.csv", text);
    write_manifest(cfg);
}

void cmd_synth(const RunConfig& cfg) {
    const SynthConfig& s = cfg.synth;
    const int threads = resolve_threads(cfg.threads);
    if (s.experiment == "frobenius") {
        const GgmGroundTruth truth = market_factor_model(s.p, s.sectors, cfg.seed);
        std::vector<std::pair<std::string, AnyMethod>> methods;
        for (const auto& id : methods_or(cfg, {"greedy", "glasso", "lwnl", "bdl"})) {
            if (id == "oracle") {
                methods.emplace_back(id, [&truth](const ReturnsMatrix&) -> Estimate {
                    return make_precision(truth.theta, "oracle");
                });
            } else {
                TuneConfig tuning = tuning_for(cfg, id);
                tuning.threads = 1;
                methods.emplace_back(id, [id, tuning](const ReturnsMatrix& r) { return fit_method(id, r, tuning); });
            }
        }
        const auto rows = frobenius_experiment(truth, methods, s.m, s.reps, derive_seed(cfg.seed, 1), threads);
        std::string text = "method,mean_error,standard_error\n";
        for (const auto& row : rows) text += fmt::format("{},{},{}\n", row.method, num(row.mean_error), num(row.standard_error));
        write_text(cfg, "frobenius.csv", text);
        write_manifest(cfg);
        return;
    }

    ComplexityOptions opts = s.complexity;
    opts.threads = threads;
    std::string curve = "method,criterion,n,m_star,status\n";
    std::string trace = "method,criterion,n,m,successes\n";
    for (const auto& id : methods_or(cfg, kGgmBases)) {
        for (Criterion c : s.criteria) {
            PrecisionMethod method;
            if (id == "oracle") {
                method = [&opts](const ReturnsMatrix& r) {
                    return make_precision(gen_brownian_clique_model(static_cast<int>(r.assets()), opts.d, opts.rho).theta,
                                          "oracle");
                };
            } else {
                method = tuned_ggm(parse_ggm(id), c, 1);
            }
            for (int n : s.sizes) {
                try {
                    const ComplexityPoint pt = sample_complexity(method, n, opts);
                    spdlog::info("{} {} n={}: m* = {}", id, to_string(c), n, pt.m_star);
                    curve += fmt::format("{},{},{},{},ok\n", id, to_string(c), n, pt.m_star);
                    for (const auto& [m, k] : pt.evaluations) {
                        trace += fmt::format("{},{},{},{},{}\n", id, to_string(c), n, m, k);
                    }
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::Unreachable) throw;
                    spdlog::warn("{} {} n={}: {}", id, to_string(c), n, e.what());
                    curve += fmt::format("{},{},{},,unreachable\n", id, to_string(c), n);
                }
            }
        }
    }
    write_text(cfg, "complexity.csv", curve);
    write_text(cfg, "complexity_trace.csv", trace);
    write_manifest(cfg);
}

void run_command(const RunConfig& cfg) {
    if (cfg.command == "estimate") return cmd_estimate(cfg);
    if (cfg.command == "backtest") return cmd_backtest(cfg);
    if (cfg.command == "compare") return cmd_compare(cfg);
    if (cfg.command == "synth") return cmd_synth(cfg);
    if (cfg.command == "diagnose") return cmd_diagnose(cfg);
    throw Error(ErrorKind::ConfigError, "unknown command '" + cfg.command + "'");
}

}  // namespace precision_lab::cli
