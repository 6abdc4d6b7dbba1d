#include "precision_lab/covariance.hpp"
#include "precision_lab/ggm.hpp"
#include "precision_lab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace precision_lab {
namespace {

constexpr double kRidge = 1e-10;
// Ball-constrained coefficients at or below this magnitude (standardized scale) are zero.
constexpr double kBallZero = 1e-9;

MatrixXd sub_matrix(const MatrixXd& s, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < rows.size(); ++r)
            out(static_cast<Index>(r), static_cast<Index>(c)) = s(rows[r], cols[c]);
    return out;
}

VectorXd sub_vector(const MatrixXd& s, const std::vector<Index>& rows, Index col) {
    VectorXd out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = s(rows[r], col);
    return out;
}

/// Correlation matrix and standard deviations of a panel; throws on a constant asset.
std::pair<MatrixXd, VectorXd> standardized(const ReturnsMatrix& r, const char* who) {
    if (r.periods() < 2) throw Error(ErrorKind::TooFewRows, std::string(who) + ": needs T >= 2");
    const MatrixXd s = covariance_of(r.values());
    const VectorXd var = s.diagonal();
    if (!(var.minCoeff() > 0.0)) {
        throw Error(ErrorKind::ZeroResidualVariance, std::string(who) + ": an asset has zero variance");
    }
    return {correlation_from_covariance(s), var.cwiseSqrt()};
}

/// D^-1 Theta D^-1 maps a precision matrix of standardized data back to the raw scale.
PrecisionEstimate to_raw_scale(PrecisionEstimate est, const VectorXd& sd) {
    const VectorXd inv = sd.cwiseInverse();
    est.matrix = symmetrize(inv.asDiagonal() * est.matrix * inv.asDiagonal());
    return est;
}

}  // namespace

double conditional_variance(const MatrixXd& s, Index i, const std::vector<Index>& set) {
    if (set.empty()) return s(i, i);
    const MatrixXd g = sub_matrix(s, set, set);
    const double ridge = kRidge * std::max(g.diagonal().mean(), 1e-300);
    const VectorXd b = sub_vector(s, set, i);
    const MatrixXd reg = g + ridge * MatrixXd::Identity(g.rows(), g.cols());
    const VectorXd coef = reg.ldlt().solve(b);
    return s(i, i) - b.dot(coef);
}

std::vector<Index> prune_neighborhood(const MatrixXd& s, Index i, std::vector<Index> set, double nu) {
    std::sort(set.begin(), set.end());
    const std::vector<Index> order = set;
    for (Index j : order) {
        std::vector<Index> without;
        for (Index k : set)
            if (k != j) without.push_back(k);
        if (conditional_variance(s, i, set) > (1.0 - nu) * conditional_variance(s, i, without)) set = std::move(without);
    }
    return set;
}

std::vector<Index> greedy_prune_neighborhood(const MatrixXd& s, Index i, int steps, double nu) {
    const Index p = s.rows();
    // c holds the residual covariance of every variable given the selected set.
    MatrixXd c = s;
    const double ridge = kRidge * std::max(s.diagonal().mean(), 1e-300);
    std::vector<Index> selected;
    std::vector<bool> used(static_cast<std::size_t>(p), false);
    used[static_cast<std::size_t>(i)] = true;
    for (int step = 0; step < steps; ++step) {
        Index best = -1;
        double best_var = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            const double v = c(i, i) - c(i, j) * c(i, j) / (c(j, j) + ridge);
            if (best < 0 || v < best_var) {
                best = j;
                best_var = v;
            }
        }
        if (best < 0) break;
        used[static_cast<std::size_t>(best)] = true;
        selected.push_back(best);
        const VectorXd col = c.col(best);
        c -= col * col.transpose() / (col(best) + ridge);
    }
    return prune_neighborhood(s, i, std::move(selected), nu);
}

std::vector<Index> hybrid_mb_neighborhood(const MatrixXd& corr, Index i, double lambda, double nu) {
    const Index p = corr.rows();
    Index j = -1;
    double best = 0.0;
    for (Index k = 0; k < p; ++k) {
        if (k == i) continue;
        const double v = corr(i, i) - corr(i, k) * corr(i, k) / corr(k, k);
        if (j < 0 || v < best) {
            j = k;
            best = v;
        }
    }
    // Profiling out the free coefficient on X_j residualizes X_i and every X_k on X_j.
    const MatrixXd c = corr - corr.col(j) * corr.row(j) / corr(j, j);
    std::vector<Index> others;
    for (Index k = 0; k < p; ++k)
        if (k != i && k != j) others.push_back(k);
    std::vector<Index> support{j};
    if (!others.empty()) {
        const double ridge = kRidge;
        VectorXd sd(static_cast<Index>(others.size()));
        for (std::size_t a = 0; a < others.size(); ++a) sd(static_cast<Index>(a)) = std::sqrt(std::max(c(others[a], others[a]), 0.0) + ridge);
        const MatrixXd q = sd.cwiseInverse().asDiagonal() * sub_matrix(c, others, others) * sd.cwiseInverse().asDiagonal();
        const VectorXd lin = sub_vector(c, others, i).cwiseQuotient(sd);
        const VectorXd w = lasso_ball_gram(symmetrize(q), lin, lambda);
        for (std::size_t a = 0; a < others.size(); ++a)
            if (std::abs(w(static_cast<Index>(a))) > kBallZero) support.push_back(others[a]);
    }
    return prune_neighborhood(corr, i, std::move(support), nu);
}

NeighborhoodSet ols_neighborhood(const MatrixXd& s, Index node, std::vector<Index> neighbors) {
    std::sort(neighbors.begin(), neighbors.end());
    NeighborhoodSet out;
    out.node = node;
    out.neighbors = neighbors;
    if (neighbors.empty()) {
        out.regression_weights = VectorXd();
        out.residual_variance = s(node, node);
    } else {
        const MatrixXd g = sub_matrix(s, neighbors, neighbors);
        const double ridge = kRidge * std::max(g.diagonal().mean(), 1e-300);
        const VectorXd b = sub_vector(s, neighbors, node);
        out.regression_weights = (g + ridge * MatrixXd::Identity(g.rows(), g.cols())).ldlt().solve(b);
        out.residual_variance = s(node, node) - b.dot(out.regression_weights);
    }
    if (!(out.residual_variance > 1e-14 * std::max(s(node, node), 1e-300))) {
        throw Error(ErrorKind::ZeroResidualVariance,
                    "node " + std::to_string(node) + " is (nearly) a linear combination of its neighbors");
    }
    return out;
}

PrecisionEstimate support_and_refit(const std::vector<NeighborhoodSet>& neighborhoods, const MatrixXd& s,
                                    std::string method) {
    const Index p = s.rows();
    if (static_cast<Index>(neighborhoods.size()) != p) {
        throw Error(ErrorKind::DimensionMismatch, "support_and_refit: one neighborhood per node required");
    }
    std::vector<std::set<Index>> adj(static_cast<std::size_t>(p));
    for (const auto& nb : neighborhoods) {
        for (Index k : nb.neighbors) {
            if (k == nb.node) continue;
            adj[static_cast<std::size_t>(nb.node)].insert(k);
            adj[static_cast<std::size_t>(k)].insert(nb.node);
        }
    }
    MatrixXd theta = MatrixXd::Zero(p, p);
    for (Index j = 0; j < p; ++j) {
        const auto& a = adj[static_cast<std::size_t>(j)];
        const NeighborhoodSet fit = ols_neighborhood(s, j, std::vector<Index>(a.begin(), a.end()));
        const double inv_tau = 1.0 / fit.residual_variance;
        theta(j, j) = inv_tau;
        for (std::size_t k = 0; k < fit.neighbors.size(); ++k)
            theta(fit.neighbors[k], j) = -fit.regression_weights(static_cast<Index>(k)) * inv_tau;
    }
    return make_precision(theta, std::move(method));
}

PrecisionEstimate mb_estimate(const ReturnsMatrix& r, double lambda, int threads) {
    if (lambda < 0.0) throw Error(ErrorKind::InvalidArgument, "mb: lambda must be >= 0");
    const auto [corr, sd] = standardized(r, "mb");
    const Index p = corr.rows();
    MatrixXd theta = MatrixXd::Zero(p, p);
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t node) {
        const Index j = static_cast<Index>(node);
        std::vector<Index> rest;
        for (Index k = 0; k < p; ++k)
            if (k != j) rest.push_back(k);
        const MatrixXd q = sub_matrix(corr, rest, rest);
        const VectorXd c = sub_vector(corr, rest, j);
        const VectorXd gamma = lasso_gram(q, c, lambda, VectorXd());
        // RSS / T from the Gram form: var - 2 c'g + g'qg.
        const double tau2 = corr(j, j) - 2.0 * c.dot(gamma) + gamma.dot(q * gamma);
        if (!(tau2 > 1e-14)) {
            throw Error(ErrorKind::ZeroResidualVariance, "mb: node " + std::to_string(j) + " has zero residual variance");
        }
        theta(j, j) = 1.0 / tau2;
        for (std::size_t k = 0; k < rest.size(); ++k) theta(rest[k], j) = -gamma(static_cast<Index>(k)) / tau2;
    });
    return to_raw_scale(make_precision(theta, "mb", {{"lambda", lambda}}), sd);
}

PrecisionEstimate greedy_prune_estimate(const ReturnsMatrix& r, int steps, double nu, int threads) {
    const Index p = r.assets();
    if (steps < 1 || steps > p - 1) {
        throw Error(ErrorKind::InvalidArgument, "greedy: steps must lie in [1, p-1]");
    }
    if (!(nu > 0.0 && nu < 1.0)) throw Error(ErrorKind::InvalidArgument, "greedy: nu must lie in (0, 1)");
    const auto [corr, sd] = standardized(r, "greedy");
    std::vector<NeighborhoodSet> nbs(static_cast<std::size_t>(p));
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
        nbs[i].node = static_cast<Index>(i);
        nbs[i].neighbors = greedy_prune_neighborhood(corr, static_cast<Index>(i), steps, nu);
    });
    PrecisionEstimate est = support_and_refit(nbs, corr, "greedy");
    est.hyperparams = {{"steps", static_cast<double>(steps)}, {"nu", nu}};
    return to_raw_scale(std::move(est), sd);
}

PrecisionEstimate hybrid_mb_estimate(const ReturnsMatrix& r, double lambda, double nu, int threads) {
    if (r.periods() < 3) throw Error(ErrorKind::TooFewRows, "hybridmb: needs T >= 3");
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "hybridmb: lambda must be > 0");
    if (!(nu > 0.0 && nu < 1.0)) throw Error(ErrorKind::InvalidArgument, "hybridmb: nu must lie in (0, 1)");
    const auto [corr, sd] = standardized(r, "hybridmb");
    const Index p = corr.rows();
    std::vector<NeighborhoodSet> nbs(static_cast<std::size_t>(p));
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
        nbs[i].node = static_cast<Index>(i);
        nbs[i].neighbors = hybrid_mb_neighborhood(corr, static_cast<Index>(i), lambda, nu);
    });
    PrecisionEstimate est = support_and_refit(nbs, corr, "hybridmb");
    est.hyperparams = {{"lambda", lambda}, {"nu", nu}};
    return to_raw_scale(std::move(est), sd);
}

}  // namespace precision_lab
