#include "precision_lab/portfolio.hpp"

#include "precision_lab/covariance.hpp"
#include "precision_lab/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>

namespace precision_lab {
namespace {

constexpr double kMinDenominator = 1e-12;
constexpr double kClipRatio = 1e-8;

PortfolioWeights normalize(VectorXd raw, std::string method) {
    const double denom = raw.sum();
    if (!(denom > kMinDenominator)) {
        throw Error(ErrorKind::DegenerateDenominator, "1' Theta 1 = " + std::to_string(denom));
    }
    PortfolioWeights w;
    w.weights = raw / denom;
    w.method = std::move(method);
    return w;
}

}  // namespace

PortfolioWeights min_variance_weights(const PrecisionEstimate& theta) {
    const Index p = theta.matrix.rows();
    if (p < 1 || theta.matrix.cols() != p) throw Error(ErrorKind::DimensionMismatch, "weights: Theta must be square");
    if (!is_symmetric(theta.matrix)) throw Error(ErrorKind::InvalidArgument, "weights: Theta is not symmetric");
    return normalize(theta.matrix * VectorXd::Ones(p), theta.method);
}

PortfolioWeights min_variance_weights(const CovarianceEstimate& sigma) {
    const Index p = sigma.matrix.rows();
    if (p < 1 || sigma.matrix.cols() != p) throw Error(ErrorKind::DimensionMismatch, "weights: Sigma must be square");
    if (!is_symmetric(sigma.matrix)) throw Error(ErrorKind::InvalidArgument, "weights: Sigma is not symmetric");
    const VectorXd ones = VectorXd::Ones(p);
    Eigen::LLT<MatrixXd> llt(sigma.matrix);
    if (llt.info() == Eigen::Success) return normalize(llt.solve(ones), sigma.method);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma.matrix);
    const VectorXd ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    if (!(top > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "weights: Sigma has no positive eigenvalue");
    const VectorXd clipped = ev.cwiseMax(kClipRatio * top);
    const MatrixXd& v = es.eigenvectors();
    PortfolioWeights w = normalize(v * clipped.cwiseInverse().asDiagonal() * (v.transpose() * ones), sigma.method);
    w.repaired = true;
    return w;
}

PortfolioWeights min_variance_weights(const Estimate& est) {
    return std::visit([](const auto& e) { return min_variance_weights(e); }, est);
}

PortfolioWeights equal_weights(Index p) {
    if (p < 1) throw Error(ErrorKind::InvalidArgument, "equal_weights: p must be >= 1");
    PortfolioWeights w;
    w.weights = VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    w.method = "ewp";
    return w;
}

double realized_loss(const PortfolioWeights& w, const MatrixXd& test, LossConvention convention) {
    if (test.cols() != w.weights.size()) throw Error(ErrorKind::DimensionMismatch, "realized_loss: width differs");
    if (test.rows() < 1) throw Error(ErrorKind::TooFewRows, "realized_loss: empty test slice");
    const VectorXd port = test * w.weights;
    const double n = static_cast<double>(port.size());
    if (convention == LossConvention::about_zero || port.size() == 1) return port.squaredNorm() / n;
    return (port.array() - port.mean()).square().sum() / (n - 1.0);
}

double realized_loss(const PortfolioWeights& w, const ReturnsMatrix& test, LossConvention convention) {
    return realized_loss(w, test.values(), convention);
}

std::vector<LossSeries> backtest(const BacktestInput& input, const std::vector<BacktestMethod>& methods) {
    if (methods.empty()) throw Error(ErrorKind::InvalidArgument, "backtest: no methods");
    const ReturnsMatrix& daily = input.daily;
    const int h = horizon_days(input.plan.horizon);
    const bool is_daily = input.plan.horizon == Horizon::daily;
    const ReturnsMatrix train_panel = is_daily ? daily : aggregate_horizon(daily, h);
    const std::vector<WindowSlice> windows =
        rolling_windows(train_panel.periods(), input.plan.window_length, input.plan.step, 1);

    const std::size_t nw = windows.size(), nm = methods.size();
    std::vector<std::vector<std::optional<double>>> loss(nw, std::vector<std::optional<double>>(nm));
    std::vector<std::vector<std::exception_ptr>> errors(nw, std::vector<std::exception_ptr>(nm));
    std::vector<std::string> stamps(nw);
    std::vector<char> used_fallback(nw, 0);

    parallel_for(nw, input.threads, [&](std::size_t k) {
        const WindowSlice& win = windows[k];
        const ReturnsMatrix train = train_panel.slice(win.train_begin, win.train_end);
        // Test rows in daily units: the next day, or the h days of the next aggregated period.
        const Index d_begin = is_daily ? win.test_begin : win.test_begin * h;
        const Index d_end = is_daily ? win.test_end : win.test_end * h;
        const MatrixXd test = daily.values().middleRows(d_begin, d_end - d_begin);
        stamps[k] = daily.dates()[static_cast<std::size_t>(d_end - 1)];
        const MatrixXd* intraday = nullptr;
        if (is_daily && input.intraday) {
            const auto it = input.intraday->by_day.find(stamps[k].substr(0, 10));
            if (it != input.intraday->by_day.end()) intraday = &it->second;
        }
        if (is_daily && !intraday) used_fallback[k] = 1;
        for (std::size_t m = 0; m < nm; ++m) {
            try {
                PortfolioWeights w = methods[m].fit(train);
                if (intraday) {
                    loss[k][m] = realized_loss(w, *intraday, LossConvention::demeaned);
                } else {
                    loss[k][m] = realized_loss(w, test, LossConvention::about_zero);
                }
            } catch (const Error&) {
                errors[k][m] = std::current_exception();
            }
        }
    });

    std::vector<LossSeries> out(nm);
    for (std::size_t m = 0; m < nm; ++m) out[m].method = methods[m].id;
    std::size_t fallbacks = 0;
    for (std::size_t k = 0; k < nw; ++k) {
        std::size_t failed = 0;
        for (std::size_t m = 0; m < nm; ++m) failed += errors[k][m] ? 1 : 0;
        if (failed == nm) {
            spdlog::warn("window ending {} skipped: every method failed", stamps[k]);
            continue;
        }
        for (std::size_t m = 0; m < nm; ++m)
            if (errors[k][m]) std::rethrow_exception(errors[k][m]);
        fallbacks += static_cast<std::size_t>(used_fallback[k]);
        for (std::size_t m = 0; m < nm; ++m) {
            out[m].losses.push_back(*loss[k][m]);
            out[m].timestamps.push_back(stamps[k]);
        }
    }
    if (fallbacks > 0) {
        spdlog::info("{} daily windows without intra-day returns use the squared next-day return", fallbacks);
    }
    return out;
}

std::vector<std::string> known_methods() {
    return {"sample",  "lwl",     "rblw",  "oas",    "bdl",    "lwnl",    "hard",    "soft",    "adaptive",
            "rie",     "ewp",     "glasso", "mb",     "clime",  "greedy",  "hybridmb", "glasso1", "glasso2",
            "mb1",     "mb2",     "clime1", "clime2", "greedy1", "greedy2", "hybridmb1", "hybridmb2"};
}

Estimate fit_method(const std::string& id, const ReturnsMatrix& r, const TuneConfig& tuning, TuneResult* tuned) {
    if (id == "sample") return sample_covariance(r);
    if (id == "lwl") return shrink_lw_linear(r).estimate;
    if (id == "rblw") return shrink_rblw(r).estimate;
    if (id == "oas") return shrink_oas(r).estimate;
    if (id == "bdl") return shrink_bodnar(r).estimate;
    if (id == "lwnl") return shrink_lw_nonlinear(r);
    if (id == "hard") return tune_threshold(r, ThresholdKind::hard, tuning.threads, tuning.folds);
    if (id == "soft") return tune_threshold(r, ThresholdKind::soft, tuning.threads, tuning.folds);
    if (id == "adaptive") return tune_threshold(r, ThresholdKind::adaptive, tuning.threads, tuning.folds);
    if (id == "rie") return rie_clean(r).first;
    if (id == "ewp") throw Error(ErrorKind::InvalidArgument, "ewp has no covariance estimate");

    std::string base = id;
    TuneConfig cfg = tuning;
    if (!base.empty() && (base.back() == '1' || base.back() == '2')) {
        cfg.criterion = base.back() == '1' ? Criterion::cv1 : Criterion::cv2;
        base.pop_back();
    }
    auto [est, res] = tune_estimator(r, parse_ggm(base), cfg);
    est.method = id;
    if (tuned) *tuned = std::move(res);
    return est;
}

BacktestMethod make_method(const std::string& id, const TuneConfig& tuning) {
    const auto& ids = known_methods();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        throw Error(ErrorKind::ConfigError, "unknown method '" + id + "'");
    }
    if (id == "ewp") {
        return {id, [](const ReturnsMatrix& train) {
                    PortfolioWeights w = equal_weights(train.assets());
                    w.asof = train.dates().back();
                    return w;
                }};
    }
    return {id, [id, tuning](const ReturnsMatrix& train) {
                PortfolioWeights w = min_variance_weights(fit_method(id, train, tuning));
                w.method = id;
                w.asof = train.dates().back();
                return w;
            }};
}

}  // namespace precision_lab
