#include "precision_lab/ggm.hpp"

#include "lasso_active.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace precision_lab {
namespace {

constexpr double kGlassoTolerance = 1e-5;
constexpr int kGlassoMaxSweeps = 1000;

/// Gram matrix of the column-j subproblem, q = w22 (W11 - w12 w12' / w_jj), read from the full W
/// without forming it. Subproblem index o stands for full index o + (o >= j).
struct ColumnGram {
    const MatrixXd& w;
    const VectorXd& w12;  // W column j without entry j
    Index j;
    double w22;

    Index full(Index o) const { return o + (o >= j ? 1 : 0); }
    double entry(Index a, Index b) const { return w22 * (w(full(a), full(b)) - w12(a) * w12(b) / w(j, j)); }
    /// q x for a subproblem vector, through one product with the full W.
    VectorXd apply(const VectorXd& x) const {
        const Index p = w.rows();
        VectorXd full = VectorXd::Zero(p);
        full.head(j) = x.head(j);
        full.tail(p - 1 - j) = x.tail(p - 1 - j);
        const VectorXd wx = w * full;
        VectorXd out(p - 1);
        out.head(j) = wx.head(j);
        out.tail(p - 1 - j) = wx.tail(p - 1 - j);
        return w22 * (out - (w12.dot(x) / w(j, j)) * w12);
    }
    void add_column(VectorXd& v, Index a, double delta) const {
        const Index fa = full(a);
        const Index p = w.rows();
        const double scale = delta * w22;
        v.head(j) += scale * w.col(fa).head(j);
        v.tail(p - 1 - j) += scale * w.col(fa).tail(p - 1 - j);
        v -= (scale * w12(a) / w(j, j)) * w12;
    }
};

VectorXd drop_entry(const VectorXd& v, Index j) {
    VectorXd out(v.size() - 1);
    out.head(j) = v.head(j);
    out.tail(v.size() - 1 - j) = v.tail(v.size() - 1 - j);
    return out;
}

VectorXd insert_zero(const VectorXd& v, Index j) {
    VectorXd out(v.size() + 1);
    out.head(j) = v.head(j);
    out(j) = 0.0;
    out.tail(v.size() - j) = v.tail(v.size() - j);
    return out;
}

/// One connected component of the |S_ij| > rho graph; the solution is block diagonal over them.
struct Block {
    std::vector<Index> idx;
    MatrixXd s;
    MatrixXd theta;
    MatrixXd w;
    bool done = false;
};

std::vector<std::vector<Index>> screen_components(const MatrixXd& s, double rho) {
    const Index p = s.rows();
    std::vector<Index> parent(static_cast<std::size_t>(p));
    std::iota(parent.begin(), parent.end(), Index{0});
    const auto find = [&](Index i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    for (Index j = 0; j < p; ++j) {
        for (Index i = j + 1; i < p; ++i) {
            if (std::abs(s(i, j)) > rho) parent[static_cast<std::size_t>(find(i))] = find(j);
        }
    }
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) groups[static_cast<std::size_t>(find(i))].push_back(i);
    std::vector<std::vector<Index>> out;
    for (auto& g : groups)
        if (!g.empty()) out.push_back(std::move(g));
    return out;
}

/// One block-coordinate sweep over the columns of a component; returns the largest change.
double sweep_block(Block& b, double rho) {
    MatrixXd& theta = b.theta;
    MatrixXd& w = b.w;
    const MatrixXd& s = b.s;
    const Index p = s.rows();
    double change = 0.0;
    for (Index j = 0; j < p; ++j) {
        const double w22 = s(j, j) + rho;
        const VectorXd w12 = drop_entry(w.col(j), j);
        const ColumnGram q{w, w12, j, w22};
        // min 1/2 x'qx + s12'x + rho ||x||_1 with q = w22 Theta11^-1: an exact column
        // minimizer, so every sweep lowers the objective.
        const VectorXd s12 = drop_entry(s.col(j), j);
        VectorXd x = drop_entry(theta.col(j), j);
        VectorXd grad = q.apply(x) + s12;
        const VectorXd t12 = detail::active_set_lasso(q, -s12, rho, std::move(x), std::move(grad));

        const VectorXd at = q.apply(t12) / w22;  // Theta11^-1 t12
        const double t22 = 1.0 / w22 + t12.dot(at);

        VectorXd column = insert_zero(t12, j);
        column(j) = t22;
        change = std::max(change, (theta.col(j) - column).cwiseAbs().maxCoeff());
        theta.col(j) = column;
        theta.row(j) = column.transpose();
        // W = Theta^-1 via the partitioned inverse: W11 = Theta11^-1 + w22 at at'.
        const VectorXd w12_full = insert_zero(w12, j);
        const VectorXd at_full = insert_zero(at, j);
        Eigen::Matrix<double, Eigen::Dynamic, 2> u(p, 2), v(p, 2);
        u << w12_full, at_full;
        v << -w12_full / w(j, j), w22 * at_full;
        w.noalias() += u * v.transpose();
        w.col(j) = -w22 * at_full;
        w.row(j) = -w22 * at_full.transpose();
        w(j, j) = w22;
    }
    return change;
}

}  // namespace

double glasso_objective(const MatrixXd& theta, const MatrixXd& s, double rho) {
    Eigen::LLT<MatrixXd> llt(theta);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -logdet + (s.array() * theta.array()).sum() + rho * theta.cwiseAbs().sum();
}

PrecisionEstimate glasso_estimate(const CovarianceEstimate& cov, double rho, GlassoTrace* trace,
                                  const MatrixXd* warm) {
    const MatrixXd& s = cov.matrix;
    const Index p = s.rows();
    if (p < 2 || s.cols() != p) throw Error(ErrorKind::DimensionMismatch, "glasso: S must be square with p >= 2");
    if (rho < 0.0) throw Error(ErrorKind::InvalidArgument, "glasso: rho must be >= 0");
    if (!is_symmetric(s)) throw Error(ErrorKind::InvalidArgument, "glasso: S is not symmetric");
    if (warm && (warm->rows() != p || warm->cols() != p)) {
        throw Error(ErrorKind::DimensionMismatch, "glasso: warm start must be p x p");
    }
    const double smax = s.diagonal().maxCoeff();
    if (rho == 0.0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues()(0) > 1e-12 * std::max(smax, 0.0))) {
            throw Error(ErrorKind::SingularInput, "glasso: rho = 0 needs a nonsingular S");
        }
    }
    if (!(s.diagonal().array() + rho > 0.0).all()) {
        throw Error(ErrorKind::SingularInput, "glasso: S_ii + rho must be positive");
    }

    std::vector<Block> blocks;
    for (auto& idx : screen_components(s, rho)) {
        Block b;
        const Index k = static_cast<Index>(idx.size());
        b.s.resize(k, k);
        for (Index c = 0; c < k; ++c)
            for (Index r = 0; r < k; ++r) b.s(r, c) = s(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
        b.w = (b.s.diagonal().array() + rho).matrix().asDiagonal();
        b.theta = (b.s.diagonal().array() + rho).inverse().matrix().asDiagonal();
        if (warm && k > 1) {
            // A principal block of a positive definite warm start is positive definite.
            MatrixXd t(k, k);
            for (Index c = 0; c < k; ++c)
                for (Index r = 0; r < k; ++r) t(r, c) = (*warm)(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
            Eigen::LLT<MatrixXd> llt(t);
            if (llt.info() == Eigen::Success) {
                b.w = symmetrize(llt.solve(MatrixXd::Identity(k, k)));
                b.theta = std::move(t);
            }
        }
        b.done = k == 1;
        b.idx = std::move(idx);
        blocks.push_back(std::move(b));
    }
    const auto assemble = [&] {
        MatrixXd theta = MatrixXd::Zero(p, p);
        for (const Block& b : blocks) {
            const Index k = static_cast<Index>(b.idx.size());
            for (Index c = 0; c < k; ++c)
                for (Index r = 0; r < k; ++r)
                    theta(b.idx[static_cast<std::size_t>(r)], b.idx[static_cast<std::size_t>(c)]) = b.theta(r, c);
        }
        return theta;
    };
    if (trace) {
        trace->objective.clear();
        trace->objective.push_back(glasso_objective(assemble(), s, rho));
        trace->sweeps = 0;
    }

    // Components advance in lockstep so the trace records whole-matrix sweeps.
    for (int sweep = 1; sweep <= kGlassoMaxSweeps; ++sweep) {
        bool all_done = true;
        for (Block& b : blocks) {
            if (b.done) continue;
            const double change = sweep_block(b, rho);
            b.done = change < kGlassoTolerance * b.theta.cwiseAbs().maxCoeff();
            all_done = all_done && b.done;
        }
        if (trace) {
            trace->objective.push_back(glasso_objective(assemble(), s, rho));
            trace->sweeps = sweep;
        }
        if (all_done) return make_precision(assemble(), "glasso", {{"rho", rho}});
    }
    throw Error(ErrorKind::NonConvergence, "glasso: no convergence within 1000 sweeps");
}

}  // namespace precision_lab
