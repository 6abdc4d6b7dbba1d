#pragma once

#include "precision_lab/core.hpp"

#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace precision_lab {

using Estimate = std::variant<CovarianceEstimate, PrecisionEstimate>;

/// Fits one estimate on a training panel for fixed hyperparameters.
using Estimator = std::function<Estimate(const ReturnsMatrix&, const ParamMap&)>;

/// Contiguous, order-preserving folds; the first T mod k folds get one extra row.
struct FoldPlan {
    int k = 5;
    std::vector<std::pair<Index, Index>> fold_slices;  // [begin, end)
};

FoldPlan kfold_split(Index periods, int k = 5);

/// Rows of r outside fold f, in time order.
ReturnsMatrix fold_complement(const ReturnsMatrix& r, const FoldPlan& plan, int f);

enum class Criterion { cv1, cv2 };
enum class SearchMode { grid, nelder_mead };

Criterion parse_criterion(const std::string& name);
SearchMode parse_search(const std::string& name);
std::string to_string(Criterion c);
std::string to_string(SearchMode s);

/// Sample variance (divisor m - 1) of the holdout returns of the minimum-variance portfolio
/// built from the train fit.
double cv1_score(const ReturnsMatrix& train, const ReturnsMatrix& holdout, const Estimator& estimator,
                 const ParamMap& params);

/// Nodewise regression residual of the holdout under the train fit, both standardized with the
/// train mean and standard deviation:
/// (1/(p m)) sum_i sum_k (x_ik + sum_{j != i} (t_ij + t_ji) / (2 t_ii) x_jk)^2.
double cv2_residual(const MatrixXd& theta, const MatrixXd& standardized_holdout);
double cv2_score(const ReturnsMatrix& train, const ReturnsMatrix& holdout, const Estimator& estimator,
                 const ParamMap& params);

/// Mean fold score. Throws when any fold fit fails or is flagged degenerate.
double cv_objective(const ReturnsMatrix& r, const FoldPlan& plan, const Estimator& estimator, const ParamMap& params,
                    Criterion criterion, int threads = 1);

struct TraceEntry {
    ParamMap params;
    double score = 0.0;
};

struct TuneResult {
    ParamMap best_params;
    double best_score = 0.0;
    std::vector<TraceEntry> trace;  // feasible evaluations only
    Criterion criterion = Criterion::cv1;
    SearchMode search = SearchMode::grid;
    bool budget_exhausted = false;
};

/// True when `a` is expected to give the sparser model (used to break score ties).
using SparsityOrder = std::function<bool(const ParamMap& a, const ParamMap& b)>;

/// Scores every grid point; failed or degenerate points are skipped. Equal scores go to
/// the sparser point.
TuneResult grid_search(const ReturnsMatrix& r, const Estimator& estimator, const std::vector<ParamMap>& grid,
                       Criterion criterion, const SparsityOrder& sparser = {}, int threads = 1, int folds = 5);

inline constexpr double kNelderMeadDiameter = 1e-4;

/// Nelder-Mead on log-parameters over the keys in `continuous`; other keys of `init` stay
/// fixed. The objective may return +inf (infeasible). Starts from a simplex with 0.5 log-steps.
TuneResult nelder_mead_minimize(const std::function<double(const ParamMap&)>& objective, const ParamMap& init,
                                const std::vector<std::string>& continuous, int budget);

enum class GgmMethod { glasso, mb, clime, greedy, hybridmb };

GgmMethod parse_ggm(const std::string& name);
std::string to_string(GgmMethod m);

/// Estimator working on the correlation scale: glasso and clime are fit to the sample
/// correlation and mapped back by D^-1 Theta D^-1.
Estimator ggm_estimator(GgmMethod m, int threads = 1);

std::vector<ParamMap> default_grid(GgmMethod m);
SparsityOrder sparsity_order(GgmMethod m);
/// Keys searched by Nelder-Mead (greedy keeps "steps" at its grid value).
std::vector<std::string> continuous_keys(GgmMethod m);

struct TuneConfig {
    Criterion criterion = Criterion::cv1;
    SearchMode search = SearchMode::grid;
    std::vector<ParamMap> grid;  // empty: default_grid
    int budget = 100;
    int folds = 5;
    int threads = 1;
};

/// Tunes on r and refits the selected parameters on all of r.
std::pair<PrecisionEstimate, TuneResult> tune_estimator(const ReturnsMatrix& r, GgmMethod m, const TuneConfig& cfg);

enum class ThresholdKind { hard, soft, adaptive };

/// 5-fold CV over thresholds. Hard and soft use tau = f * max |off-diagonal S| with
/// f in {0, 1/20, ..., 1}, S taken from the panel being thresholded; adaptive uses
/// delta in {0, 0.5, ..., 4}. Loss is the Frobenius distance between the thresholded train
/// estimate and the holdout sample covariance.
CovarianceEstimate tune_threshold(const ReturnsMatrix& r, ThresholdKind kind, int threads = 1, int folds = 5);

}  // namespace precision_lab
