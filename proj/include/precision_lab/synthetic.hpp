#pragma once

#include "precision_lab/core.hpp"
#include "precision_lab/tuning.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace precision_lab {

struct GgmGroundTruth {
    MatrixXd theta;
    MatrixXd sigma;
    EdgeSet edges;
    /// Smallest |theta_ij| / sqrt(theta_ii theta_jj) over true edges (+inf without edges).
    double kappa = 0.0;
};

/// Fills sigma, edges and kappa from theta. Entries with |theta_ij| <= tol are non-edges.
GgmGroundTruth truth_from_precision(MatrixXd theta, double tol = 0.0);
GgmGroundTruth truth_from_covariance(const MatrixXd& sigma, double tol = 0.0);

/// n coordinates: the first n/2 are Brownian with covariance 1/2 + min(i, j)/n (1-indexed),
/// the last n/2 are independent cliques of size d with precision I - (rho/d) 11' rescaled to
/// unit variances. The two halves are independent.
GgmGroundTruth gen_brownian_clique_model(int n, int d, double rho);

/// One market factor, `sectors` sector factors and idiosyncratic noise at daily-return scale.
/// Loadings and volatilities are drawn from `seed`.
GgmGroundTruth market_factor_model(int p, int sectors, std::uint64_t seed);

/// m iid rows from N(0, truth.sigma) through a Cholesky factor.
ReturnsMatrix sample_mvn(const GgmGroundTruth& truth, Index m, std::uint64_t seed);
ReturnsMatrix sample_mvn(const MatrixXd& sigma, Index m, std::uint64_t seed);

struct RecoveryReport {
    double incorrect_edges_per_node = 0.0;
    EdgeSet missed;
    EdgeSet spurious;
};

/// Predicted edges are pairs with |t_ij| / sqrt(t_ii t_jj) > kappa / 2 (truth's kappa).
EdgeSet kappa_half_edges(const MatrixXd& theta_hat, double kappa);
RecoveryReport edge_recovery_error(const PrecisionEstimate& est, const GgmGroundTruth& truth);

using PrecisionMethod = std::function<PrecisionEstimate(const ReturnsMatrix&)>;

/// GGM method tuned by grid CV on each sample.
PrecisionMethod tuned_ggm(GgmMethod m, Criterion criterion, int threads = 1);

struct ComplexityOptions {
    int d = 5;
    double rho = 0.95;
    double target = 0.25;
    int trials = 3;
    Index ladder_start = 32;
    Index cap = Index{1} << 16;
    /// Binary search stops once hi - lo <= resolution * hi.
    double resolution = 1.0 / 16.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct ComplexityPoint {
    int n = 0;
    Index m_star = 0;
    /// Ladder and bisection evaluations: (m, successful trials).
    std::vector<std::pair<Index, int>> evaluations;
};

/// Smallest m (doubling ladder, then bisection) at which at least ceil(trials/2) trials reach
/// the target error. Throws Unreachable when the cap fails.
ComplexityPoint sample_complexity(const PrecisionMethod& method, int n, const ComplexityOptions& options);

/// m* for every n in `sizes`.
std::vector<ComplexityPoint> sample_complexity_curve(const PrecisionMethod& method, const std::vector<int>& sizes,
                                                     const ComplexityOptions& options);

/// Covariance or precision estimate from a sample; covariance estimates are inverted.
using AnyMethod = std::function<Estimate(const ReturnsMatrix&)>;

struct FrobeniusRow {
    std::string method;
    double mean_error = 0.0;
    double standard_error = 0.0;
};

/// Mean and standard error over reps of ||Theta - Theta_hat||_F.
std::vector<FrobeniusRow> frobenius_experiment(const GgmGroundTruth& truth,
                                               const std::vector<std::pair<std::string, AnyMethod>>& methods, Index m,
                                               int reps, std::uint64_t seed, int threads = 1);

/// Precision matrix of an estimate: the matrix itself, or the inverse of a covariance (with the
/// eigenvalue clip of the weight solver when indefinite).
MatrixXd precision_of(const Estimate& est);

}  // namespace precision_lab
