#pragma once

#include "precision_lab/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace precision_lab::detail {

/// Lower Cholesky factor of q restricted to an ordered index list, grown and shrunk in place.
template <class Gram>
class ActiveFactor {
public:
    ActiveFactor(const Gram& q, Index capacity) : q_(q), l_(capacity, capacity) {}

    [[nodiscard]] Index size() const { return n_; }
    [[nodiscard]] Index index(Index a) const { return idx_[static_cast<std::size_t>(a)]; }

    /// Appends index i: one forward solve for the new row.
    void push(Index i) {
        VectorXd row(n_);
        for (Index a = 0; a < n_; ++a) row(a) = q_.entry(index(a), i);
        lower().solveInPlace(row);
        const double d2 = q_.entry(i, i) - row.squaredNorm();
        if (!(d2 > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "lasso: Gram block is not positive definite");
        l_.row(n_).head(n_) = row.transpose();
        l_(n_, n_) = std::sqrt(d2);
        idx_.push_back(i);
        ++n_;
    }

    /// Removes position a: drop its row, then rotate column pairs back to lower-triangular form.
    void remove(Index a) {
        for (Index r = a; r + 1 < n_; ++r) l_.row(r).head(n_) = l_.row(r + 1).head(n_);
        for (Index r = a; r + 1 < n_; ++r) {
            const double x1 = l_(r, r);
            const double x2 = l_(r, r + 1);
            const double h = std::hypot(x1, x2);
            const double cs = x1 / h;
            const double sn = x2 / h;
            for (Index i = r; i + 1 < n_; ++i) {
                const double u = l_(i, r);
                const double v = l_(i, r + 1);
                l_(i, r) = cs * u + sn * v;
                l_(i, r + 1) = cs * v - sn * u;
            }
            l_(r, r + 1) = 0.0;
        }
        idx_.erase(idx_.begin() + a);
        --n_;
    }

    /// Solves q_AA z = rhs.
    [[nodiscard]] VectorXd solve(VectorXd rhs) const {
        lower().solveInPlace(rhs);
        upper().solveInPlace(rhs);
        return rhs;
    }

    /// q_AA v.
    [[nodiscard]] VectorXd times(const VectorXd& v) const {
        const VectorXd t = upper() * v;
        return lower() * t;
    }

private:
    [[nodiscard]] auto lower() const { return l_.topLeftCorner(n_, n_).template triangularView<Eigen::Lower>(); }
    [[nodiscard]] auto upper() const {
        return l_.topLeftCorner(n_, n_).transpose().template triangularView<Eigen::Upper>();
    }

    const Gram& q_;
    MatrixXd l_;
    std::vector<Index> idx_;
    Index n_ = 0;
};

/// Exact lasso min 1/2 x'qx - c'x + penalty ||x||_1 for positive definite q, by sign-fixed
/// active-set solves from x. `grad` must equal q x - c on entry. Gram access goes through
/// q.entry(i, l) and q.add_column(v, i, delta) (v += delta * q.col(i)), so callers can supply q
/// implicitly.
template <class Gram>
VectorXd active_set_lasso(const Gram& q, const VectorXd& c, double penalty, VectorXd x, VectorXd grad) {
    const Index k = c.size();
    if (k == 0) return x;
    const double slack = 1e-12 * std::max({penalty, c.cwiseAbs().maxCoeff(), 1e-300});
    ActiveFactor<Gram> active(q, k);
    for (Index j = 0; j < k; ++j)
        if (x(j) != 0.0) active.push(j);

    for (Index step = 0; step < 20 * k + 20; ++step) {
        bool stationary = true;
        for (Index a = 0; a < active.size(); ++a) {
            const Index j = active.index(a);
            if (std::abs(grad(j) + penalty * (x(j) > 0.0 ? 1.0 : -1.0)) > slack) stationary = false;
        }
        if (stationary) {
            Index worst = -1;
            double excess = slack;
            for (Index j = 0; j < k; ++j) {
                if (x(j) == 0.0 && std::abs(grad(j)) - penalty > excess) {
                    excess = std::abs(grad(j)) - penalty;
                    worst = j;
                }
            }
            if (worst < 0) return x;
            active.push(worst);
        }

        // Minimize with signs fixed: q_AA x_A = c_A - penalty * sign_A. New members take the sign
        // that decreases the objective, -sign(grad).
        const Index nb = active.size();
        VectorXd ca(nb), sign(nb), from(nb);
        for (Index a = 0; a < nb; ++a) {
            const Index ia = active.index(a);
            ca(a) = c(ia);
            from(a) = x(ia);
            sign(a) = x(ia) != 0.0 ? (x(ia) > 0.0 ? 1.0 : -1.0) : (grad(ia) > 0.0 ? -1.0 : 1.0);
        }
        const VectorXd target = active.solve(ca - penalty * sign);
        // Candidates on the segment from + t (target - from): t = 1 and every t where a current
        // nonzero reaches zero. The best one strictly lowers the objective. The smooth part is a
        // quadratic in t.
        const VectorXd dir = target - from;
        const VectorXd qdir = active.times(dir);
        const double q0 = 0.5 * from.dot(active.times(from)) - ca.dot(from);
        const double q1 = from.dot(qdir) - ca.dot(dir);
        const double q2 = 0.5 * dir.dot(qdir);
        const auto objective = [&](double t) {
            return q0 + t * (q1 + t * q2) + penalty * (from + t * dir).lpNorm<1>();
        };
        double best_t = 1.0;
        Index snapped = -1;
        double best_value = objective(1.0);
        for (Index a = 0; a < nb; ++a) {
            if (from(a) == 0.0 || from(a) * target(a) > 0.0) continue;
            const double t = from(a) / (from(a) - target(a));
            const double value = objective(t);
            if (value < best_value) {
                best_value = value;
                best_t = t;
                snapped = a;
            }
        }
        for (Index a = 0; a < nb; ++a) {
            const Index ia = active.index(a);
            const double next = a == snapped ? 0.0 : from(a) + best_t * dir(a);
            const double delta = next - x(ia);
            if (delta != 0.0) q.add_column(grad, ia, delta);
            x(ia) = next;
        }
        for (Index a = nb - 1; a >= 0; --a)
            if (x(active.index(a)) == 0.0) active.remove(a);
    }
    throw Error(ErrorKind::NonConvergence, "lasso: active set did not settle");
}

}  // namespace precision_lab::detail
