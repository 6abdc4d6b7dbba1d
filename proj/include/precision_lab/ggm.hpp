#pragma once

#include "precision_lab/core.hpp"

#include <optional>
#include <vector>

namespace precision_lab {

/// Penalized form: 1/2 ||y - Xw||^2 / T + penalty ||w||_1.
/// Constrained form (radius set): 1/2 ||y - Xw||^2 / T subject to ||w||_1 <= radius.
struct LassoProblem {
    MatrixXd design;
    VectorXd response;
    double penalty = 0.0;
    std::optional<double> l1_ball_radius;
};

inline constexpr double kLassoTolerance = 1e-7;
inline constexpr int kLassoMaxSweeps = 10000;

VectorXd lasso_solve(const LassoProblem& prob);

/// Same problem written through q = X'X/T and c = X'y/T:
/// min 1/2 w'qw - c'w + penalty ||w||_1, coordinate descent in ascending order from `warm`.
/// Converged when the largest coordinate move is below tol * scale.
VectorXd lasso_gram(const MatrixXd& q, const VectorXd& c, double penalty, VectorXd warm,
                    double tol = kLassoTolerance, double scale = 1.0);

/// Exact minimizer of the same objective for positive definite q: sign-fixed active-set
/// solves from `warm`. Each step moves to the best point among the solve and the sign changes
/// on the way to it, and a stationary active set admits the worst KKT violator.
VectorXd lasso_gram_active(const MatrixXd& q, const VectorXd& c, double penalty, VectorXd warm);

/// min 1/2 w'qw - c'w subject to ||w||_1 <= radius, solved exactly along the penalized path.
VectorXd lasso_ball_gram(const MatrixXd& q, const VectorXd& c, double radius);

/// Euclidean projection onto {w : ||w||_1 <= radius}.
VectorXd project_l1_ball(const VectorXd& v, double radius);

struct NeighborhoodSet {
    Index node = 0;
    std::vector<Index> neighbors;  // ascending
    VectorXd regression_weights;   // aligned with neighbors
    double residual_variance = 0.0;
};

/// Minimized objective -log det Theta + tr(S Theta) + rho ||Theta||_1 (all entries penalized).
double glasso_objective(const MatrixXd& theta, const MatrixXd& s, double rho);

struct GlassoTrace {
    std::vector<double> objective;  // value of glasso_objective after each sweep
    int sweeps = 0;
};

/// Block coordinate descent over columns on the primal problem, keeping W = Theta^-1.
/// Stops when the largest entry change relative to the largest entry is below 1e-5.
PrecisionEstimate glasso_estimate(const CovarianceEstimate& s, double rho, GlassoTrace* trace = nullptr,
                                  const MatrixXd* warm = nullptr);

/// Nodewise lasso on standardized data; columns Gamma_j / tau_j^2, averaged, mapped back to the
/// raw scale.
PrecisionEstimate mb_estimate(const ReturnsMatrix& r, double lambda, int threads = 1);

/// Column j solves min ||beta||_1 s.t. |S beta - e_j|_inf <= lambda. Unsymmetrized columns.
MatrixXd clime_columns(const MatrixXd& s, double lambda, int threads = 1);

/// clime_columns followed by the smaller-magnitude symmetrization. lambda >= 1 yields the zero
/// matrix, flagged degenerate.
PrecisionEstimate clime_estimate(const CovarianceEstimate& s, double lambda, int threads = 1);

/// Residual variance of node i regressed on `set` (ridge 1e-10 on the Gram block).
double conditional_variance(const MatrixXd& s, Index i, const std::vector<Index>& set);

/// Sequential pruning in ascending index order: drop j when
/// Var(i | set) > (1 - nu) Var(i | set \ {j}).
std::vector<Index> prune_neighborhood(const MatrixXd& s, Index i, std::vector<Index> set, double nu);

/// Greedy selection of `steps` regressors for node i followed by pruning.
std::vector<Index> greedy_prune_neighborhood(const MatrixXd& s, Index i, int steps, double nu);

PrecisionEstimate greedy_prune_estimate(const ReturnsMatrix& r, int steps, double nu, int threads = 1);

std::vector<Index> hybrid_mb_neighborhood(const MatrixXd& corr, Index i, double lambda, double nu);

PrecisionEstimate hybrid_mb_estimate(const ReturnsMatrix& r, double lambda, double nu, int threads = 1);

/// OLS fit of node i on `neighbors` from the covariance s.
NeighborhoodSet ols_neighborhood(const MatrixXd& s, Index node, std::vector<Index> neighbors);

/// Union-symmetrizes the supports, refits every node by OLS on its final neighborhood and
/// averages Gamma_j / tau_j^2 columns.
PrecisionEstimate support_and_refit(const std::vector<NeighborhoodSet>& neighborhoods, const MatrixXd& s,
                                    std::string method = "refit");

}  // namespace precision_lab
