#include "precision_lab/ggm.hpp"

#include "lasso_active.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace precision_lab {
namespace {

double soft(double z, double t) { return std::copysign(std::max(std::abs(z) - t, 0.0), z); }

}  // namespace

VectorXd lasso_gram(const MatrixXd& q, const VectorXd& c, double penalty, VectorXd warm, double tol, double scale) {
    const Index k = q.rows();
    if (q.cols() != k || c.size() != k) throw Error(ErrorKind::DimensionMismatch, "lasso_gram: shapes");
    if (penalty < 0.0) throw Error(ErrorKind::InvalidArgument, "lasso_gram: penalty must be >= 0");
    VectorXd w = warm.size() == k ? std::move(warm) : VectorXd::Zero(k);
    VectorXd qw = q * w;
    const double limit = tol * scale;
    for (int sweep = 0; sweep < kLassoMaxSweeps; ++sweep) {
        double max_move = 0.0;
        for (Index j = 0; j < k; ++j) {
            const double qjj = q(j, j);
            if (!(qjj > 0.0)) {
                if (w(j) != 0.0) {
                    qw -= q.col(j) * w(j);
                    w(j) = 0.0;
                }
                continue;
            }
            const double partial = c(j) - (qw(j) - qjj * w(j));
            const double next = soft(partial, penalty) / qjj;
            const double delta = next - w(j);
            if (delta != 0.0) {
                qw += q.col(j) * delta;
                w(j) = next;
                max_move = std::max(max_move, std::abs(delta));
            }
        }
        if (max_move < limit) return w;
    }
    throw Error(ErrorKind::NonConvergence, "lasso: no convergence within 10000 sweeps");
}

VectorXd project_l1_ball(const VectorXd& v, double radius) {
    if (radius <= 0.0) return VectorXd::Zero(v.size());
    if (v.lpNorm<1>() <= radius) return v;
    // Sort magnitudes descending and find the soft-threshold level.
    std::vector<double> u(v.size());
    for (Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v(i));
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cumsum += u[i];
        const double t = (cumsum - radius) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) theta = t;
    }
    VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out(i) = soft(v(i), theta);
    return out;
}

VectorXd lasso_gram_active(const MatrixXd& q, const VectorXd& c, double penalty, VectorXd warm) {
    const Index k = q.rows();
    if (q.cols() != k || c.size() != k) throw Error(ErrorKind::DimensionMismatch, "lasso_gram_active: shapes");
    if (penalty < 0.0) throw Error(ErrorKind::InvalidArgument, "lasso_gram_active: penalty must be >= 0");
    VectorXd x = warm.size() == k ? std::move(warm) : VectorXd::Zero(k);
    struct Dense {
        const MatrixXd& m;
        double entry(Index i, Index l) const { return m(i, l); }
        void add_column(VectorXd& v, Index i, double delta) const { v += delta * m.col(i); }
    };
    VectorXd grad = q * x - c;
    return detail::active_set_lasso(Dense{q}, c, penalty, std::move(x), std::move(grad));
}

VectorXd lasso_ball_gram(const MatrixXd& q, const VectorXd& c, double radius) {
    const Index k = q.rows();
    if (q.cols() != k || c.size() != k) throw Error(ErrorKind::DimensionMismatch, "lasso_ball_gram: shapes");
    if (radius < 0.0) throw Error(ErrorKind::InvalidArgument, "lasso_ball_gram: radius must be >= 0");
    VectorXd x = VectorXd::Zero(k);
    if (k == 0 || radius == 0.0) return x;

    // Homotopy on the penalized path: the ball solution is the penalized solution at the
    // multiplier where ||x(lambda)||_1 reaches the radius. Between kinks x is linear in lambda.
    Index first = 0;
    double lambda = c.cwiseAbs().maxCoeff(&first);
    if (!(lambda > 0.0)) return x;
    std::vector<Index> active{first};
    std::vector<bool> in_active(static_cast<std::size_t>(k), false);
    in_active[static_cast<std::size_t>(first)] = true;
    const double ridge = 1e-12 * std::max(q.diagonal().cwiseAbs().maxCoeff(), 1e-300);

    for (Index step = 0; step < 8 * k + 8; ++step) {
        const Index na = static_cast<Index>(active.size());
        MatrixXd qa(na, na);
        VectorXd sa(na);
        for (Index a = 0; a < na; ++a) {
            const Index ia = active[static_cast<std::size_t>(a)];
            for (Index b = 0; b < na; ++b) qa(a, b) = q(ia, active[static_cast<std::size_t>(b)]);
            const double r = c(ia) - q.row(ia).dot(x);
            sa(a) = x(ia) != 0.0 ? (x(ia) > 0.0 ? 1.0 : -1.0) : (r >= 0.0 ? 1.0 : -1.0);
        }
        qa.diagonal().array() += ridge;
        const VectorXd da = qa.ldlt().solve(sa);
        VectorXd d = VectorXd::Zero(k);
        for (Index a = 0; a < na; ++a) d(active[static_cast<std::size_t>(a)]) = da(a);
        const double norm_rate = sa.dot(da);
        const VectorXd qd = q * d;
        const VectorXd resid = c - q * x;

        // Decreasing lambda by g moves x by g d; pick the first event.
        double g = lambda;
        int event = 0;  // 0: lambda hits 0, 1: radius, 2: join, 3: drop
        Index who = -1;
        if (norm_rate > 0.0) {
            const double to_radius = (radius - x.lpNorm<1>()) / norm_rate;
            if (to_radius <= g) {
                g = std::max(to_radius, 0.0);
                event = 1;
            }
        }
        for (Index j = 0; j < k; ++j) {
            if (in_active[static_cast<std::size_t>(j)]) {
                if (x(j) != 0.0 && d(j) != 0.0) {
                    const double t = -x(j) / d(j);
                    if (t > 0.0 && t < g) {
                        g = t;
                        event = 3;
                        who = j;
                    }
                }
                continue;
            }
            // |resid_j - g qd_j| = lambda - g
            for (const double sgn : {1.0, -1.0}) {
                const double den = 1.0 - sgn * qd(j);
                if (den <= 0.0) continue;
                const double t = (lambda - sgn * resid(j)) / den;
                if (t >= 0.0 && t < g) {
                    g = t;
                    event = 2;
                    who = j;
                }
            }
        }
        x += g * d;
        lambda -= g;
        if (event == 0 || event == 1) return x;
        if (event == 2) {
            active.push_back(who);
            in_active[static_cast<std::size_t>(who)] = true;
        } else {
            x(who) = 0.0;
            active.erase(std::find(active.begin(), active.end(), who));
            in_active[static_cast<std::size_t>(who)] = false;
        }
    }
    throw Error(ErrorKind::NonConvergence, "lasso (L1 ball): homotopy did not terminate");
}

VectorXd lasso_solve(const LassoProblem& prob) {
    const Index t = prob.design.rows();
    if (prob.response.size() != t) throw Error(ErrorKind::DimensionMismatch, "lasso_solve: rows differ");
    if (t < 1) throw Error(ErrorKind::TooFewRows, "lasso_solve: empty design");
    const double td = static_cast<double>(t);
    const MatrixXd q = prob.design.transpose() * prob.design / td;
    const VectorXd c = prob.design.transpose() * prob.response / td;
    if (prob.l1_ball_radius) {
        if (prob.penalty != 0.0) {
            throw Error(ErrorKind::InvalidArgument, "lasso_solve: set either a penalty or an L1-ball radius");
        }
        return lasso_ball_gram(q, c, *prob.l1_ball_radius);
    }
    return lasso_gram(q, c, prob.penalty, VectorXd());
}

}  // namespace precision_lab
