#pragma once

#include "precision_lab/core.hpp"
#include "precision_lab/ingest.hpp"
#include "precision_lab/tuning.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace precision_lab {

struct PortfolioWeights {
    VectorXd weights;
    std::string method;
    std::string asof;
    /// Set when an indefinite covariance was repaired by eigenvalue clipping.
    bool repaired = false;
};

/// Theta 1 / (1' Theta 1). Throws DegenerateDenominator when 1' Theta 1 <= 1e-12.
PortfolioWeights min_variance_weights(const PrecisionEstimate& theta);

/// Sigma^-1 1 / (1' Sigma^-1 1) through a Cholesky solve. An indefinite input has its
/// eigenvalues clipped to 1e-8 * max eigenvalue first and the result is flagged.
PortfolioWeights min_variance_weights(const CovarianceEstimate& sigma);

PortfolioWeights min_variance_weights(const Estimate& est);

PortfolioWeights equal_weights(Index p);

enum class LossConvention {
    demeaned,    // sample variance, divisor n - 1; a single row falls back to about_zero
    about_zero,  // mean of squared portfolio returns
};

double realized_loss(const PortfolioWeights& w, const MatrixXd& test,
                     LossConvention convention = LossConvention::demeaned);
double realized_loss(const PortfolioWeights& w, const ReturnsMatrix& test,
                     LossConvention convention = LossConvention::demeaned);

struct LossSeries {
    std::string method;
    std::vector<double> losses;
    std::vector<std::string> timestamps;
};

/// One backtest participant: fits weights from a training panel.
struct BacktestMethod {
    std::string id;
    std::function<PortfolioWeights(const ReturnsMatrix& train)> fit;
};

struct BacktestInput {
    ReturnsMatrix daily;
    RollingWindowPlan plan;
    /// Daily horizon only: intra-day returns keyed by test date.
    const IntradayReturns* intraday = nullptr;
    int threads = 1;
};

/// Rolling out-of-sample evaluation. Daily: train on window_length days, loss on the next day
/// (intra-day sample variance when available, else the squared return). Weekly/monthly: train
/// on window_length aggregated periods, loss is the about-zero variance of the next h daily
/// portfolio returns. A window where every method fails is skipped; a window where only some
/// fail rethrows that failure.
std::vector<LossSeries> backtest(const BacktestInput& input, const std::vector<BacktestMethod>& methods);

/// Method identifiers accepted by the backtest and CLI:
/// sample lwl rblw oas bdl lwnl hard soft adaptive rie ewp, and glasso mb clime greedy hybridmb
/// with an optional criterion suffix (glasso1 = CV1, glasso2 = CV2; no suffix = configured default).
std::vector<std::string> known_methods();

/// Builds the weight-fitting closure for a method id. GGM methods re-tune on every window.
BacktestMethod make_method(const std::string& id, const TuneConfig& tuning);

/// Fits one method on a panel and returns its estimate (EWP has none and is rejected).
Estimate fit_method(const std::string& id, const ReturnsMatrix& r, const TuneConfig& tuning,
                    TuneResult* tuned = nullptr);

}  // namespace precision_lab
