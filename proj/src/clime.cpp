#include "precision_lab/ggm.hpp"
#include "precision_lab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace precision_lab {
namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kFeasTol = 1e-10;

/// min ||beta||_1 s.t. |S beta - e_j|_inf <= lambda, for 0 < lambda < 1, by a parametric dual
/// simplex in lambda. Columns: u (p), v (p), slack s (p) with S(u - v) - s = e_j and
/// -mu <= s <= mu. At mu = 1 the slack basis with beta = 0 is optimal; mu then decreases
/// through the breakpoints of the solution path while reduced costs stay dual feasible.
VectorXd clime_column(const MatrixXd& s, Index j, double lambda) {
    const Index p = s.rows();
    const Index n = 3 * p;
    // Tableau B^-1 [A | e_j]; the slack basis B = -I negates every row.
    MatrixXd t(p, n + 1);
    t.leftCols(p) = -s;
    t.middleCols(p, p) = s;
    t.middleCols(2 * p, p) = MatrixXd::Identity(p, p);
    t.col(n).setZero();
    t(j, n) = -1.0;

    std::vector<Index> basis(static_cast<std::size_t>(p));
    std::vector<Index> row_of(static_cast<std::size_t>(n), -1);
    for (Index r = 0; r < p; ++r) {
        basis[static_cast<std::size_t>(r)] = 2 * p + r;
        row_of[static_cast<std::size_t>(2 * p + r)] = r;
    }
    // Nonbasic slacks sit at -mu (side -1) or +mu (side +1); u and v sit at 0 (side 0).
    std::vector<int> side(static_cast<std::size_t>(n), 0);
    VectorXd d(n);
    d.head(2 * p).setOnes();
    d.tail(p).setZero();

    const auto is_slack = [&](Index k) { return k >= 2 * p; };
    // x_B(mu) = t.col(n) - sum over nonbasic slacks of t.col(k) * side_k * mu = a + mu b.
    const auto basic_values = [&](VectorXd& a, VectorXd& b) {
        a = t.col(n);
        b = VectorXd::Zero(p);
        for (Index k = 2 * p; k < n; ++k) {
            if (row_of[static_cast<std::size_t>(k)] < 0 && side[static_cast<std::size_t>(k)] != 0) {
                b -= t.col(k) * static_cast<double>(side[static_cast<std::size_t>(k)]);
            }
        }
    };
    // Slack of the bound constraints of row r at mu: lower (x - lo) and upper (hi - x).
    const auto bound_gaps = [&](Index r, double a, double b, double mu) {
        const Index k = basis[static_cast<std::size_t>(r)];
        const double x = a + mu * b;
        if (!is_slack(k)) return std::pair{x, std::numeric_limits<double>::infinity()};
        return std::pair{x + mu, mu - x};
    };

    double mu = 1.0;
    VectorXd a, b;
    const int max_pivots = static_cast<int>(50 * n);
    for (int pivots = 0; pivots <= max_pivots; ++pivots) {
        basic_values(a, b);
        // Most violated bound at the current mu; otherwise the next breakpoint above lambda.
        Index leave = -1;
        int leave_side = 0;
        double worst = -kFeasTol;
        for (Index r = 0; r < p; ++r) {
            const auto [lo_gap, hi_gap] = bound_gaps(r, a(r), b(r), mu);
            if (lo_gap < worst) {
                worst = lo_gap;
                leave = r;
                leave_side = -1;
            }
            if (hi_gap < worst) {
                worst = hi_gap;
                leave = r;
                leave_side = 1;
            }
        }
        if (leave < 0) {
            double next = lambda;
            for (Index r = 0; r < p; ++r) {
                // Gaps are linear in mu: g(mu) = g0 + g1 mu, violated below -g0/g1 when g1 > 0.
                const bool slack = is_slack(basis[static_cast<std::size_t>(r)]);
                const double lo0 = a(r), lo1 = b(r) + (slack ? 1.0 : 0.0);
                if (lo1 > 0.0 && -lo0 / lo1 > next) {
                    next = -lo0 / lo1;
                    leave = r;
                    leave_side = -1;
                }
                if (slack) {
                    const double hi0 = -a(r), hi1 = 1.0 - b(r);
                    if (hi1 > 0.0 && -hi0 / hi1 > next) {
                        next = -hi0 / hi1;
                        leave = r;
                        leave_side = 1;
                    }
                }
            }
            if (leave < 0) {
                const VectorXd x = a + lambda * b;
                VectorXd beta = VectorXd::Zero(p);
                for (Index r = 0; r < p; ++r) {
                    const Index k = basis[static_cast<std::size_t>(r)];
                    if (k < p) beta(k) += x(r);
                    else if (k < 2 * p) beta(k - p) -= x(r);
                }
                return beta;
            }
            mu = std::min(mu, next);
        }

        // Dual ratio test: the leaving variable moves back inside its bound.
        const Index out = basis[static_cast<std::size_t>(leave)];
        Index q = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Index k = 0; k < n; ++k) {
            if (row_of[static_cast<std::size_t>(k)] >= 0) continue;
            const double alpha = t(leave, k);
            if (std::abs(alpha) <= kPivotTol) continue;
            // x_out = ... - alpha x_k; raising x_out needs alpha < 0 for k rising, > 0 for k falling.
            const bool can_rise = !is_slack(k) || side[static_cast<std::size_t>(k)] <= 0;
            const bool can_fall = is_slack(k) && side[static_cast<std::size_t>(k)] >= 0;
            const double want = leave_side < 0 ? -alpha : alpha;  // > 0 when k rising helps
            if (!((want > 0.0 && can_rise) || (want < 0.0 && can_fall))) continue;
            const double ratio = std::abs(d(k)) / std::abs(alpha);
            if (ratio < best) {
                best = ratio;
                q = k;
            }
        }
        if (q < 0) throw Error(ErrorKind::Infeasible, "clime: column LP infeasible");

        const double piv = t(leave, q);
        t.row(leave) /= piv;
        VectorXd factor = t.col(q);
        factor(leave) = 0.0;
        const Eigen::RowVectorXd pivot_row = t.row(leave);
        t.noalias() -= factor * pivot_row;
        const double fd = d(q);
        if (fd != 0.0) d -= fd * pivot_row.head(n).transpose();
        d(q) = 0.0;
        row_of[static_cast<std::size_t>(out)] = -1;
        side[static_cast<std::size_t>(out)] = is_slack(out) ? leave_side : 0;
        row_of[static_cast<std::size_t>(q)] = leave;
        side[static_cast<std::size_t>(q)] = 0;
        basis[static_cast<std::size_t>(leave)] = q;
    }
    throw Error(ErrorKind::SolverStall, "clime: simplex pivot limit reached");
}

}  // namespace

MatrixXd clime_columns(const MatrixXd& s, double lambda, int threads) {
    const Index p = s.rows();
    if (s.cols() != p || p < 1) throw Error(ErrorKind::DimensionMismatch, "clime: S must be square");
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "clime: lambda must be > 0");
    MatrixXd out = MatrixXd::Zero(p, p);
    if (lambda >= 1.0) return out;
    parallel_for(static_cast<std::size_t>(p), threads,
                 [&](std::size_t j) { out.col(static_cast<Index>(j)) = clime_column(s, static_cast<Index>(j), lambda); });
    return out;
}

PrecisionEstimate clime_estimate(const CovarianceEstimate& cov, double lambda, int threads) {
    const MatrixXd raw = clime_columns(cov.matrix, lambda, threads);
    const Index p = raw.rows();
    MatrixXd sym(p, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < p; ++i) sym(i, j) = std::abs(raw(i, j)) <= std::abs(raw(j, i)) ? raw(i, j) : raw(j, i);
    PrecisionEstimate est = make_precision(sym, "clime", {{"lambda", lambda}});
    if (lambda >= 1.0) {
        est.degenerate = true;
        est.warnings.emplace_back("Degenerate: lambda >= 1 gives the zero matrix");
    }
    return est;
}

}  // namespace precision_lab
