#include "precision_lab/covariance.hpp"
#include "precision_lab/ggm.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace precision_lab;
using namespace precision_lab::testing;

namespace {

ReturnsMatrix panel(const MatrixXd& x) { return ReturnsMatrix::unlabeled(x); }

CovarianceEstimate as_cov(const MatrixXd& s) {
    CovarianceEstimate c;
    c.matrix = s;
    return c;
}

/// Tridiagonal precision of an AR(1) chain with unit innovation variance.
MatrixXd chain_precision(Index p, double phi) {
    MatrixXd theta = MatrixXd::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
        theta(i, i) = (i == 0 || i == p - 1) ? 1.0 : 1.0 + phi * phi;
        if (i + 1 < p) theta(i, i + 1) = theta(i + 1, i) = -phi;
    }
    return theta;
}

/// Two disjoint cliques of size d with Theta_block = I - (rho/d) 11'.
MatrixXd two_block_precision(Index d, double rho) {
    MatrixXd theta = MatrixXd::Zero(2 * d, 2 * d);
    const MatrixXd block = MatrixXd::Identity(d, d) - (rho / static_cast<double>(d)) * MatrixXd::Ones(d, d);
    theta.topLeftCorner(d, d) = block;
    theta.bottomRightCorner(d, d) = block;
    return theta;
}

EdgeSet true_edges(const MatrixXd& theta) { return support_of(theta, 1e-12); }

/// Edges whose normalized magnitude exceeds half the weakest true normalized edge.
EdgeSet kappa_half_edges(const MatrixXd& est, const MatrixXd& truth) {
    double kappa = std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : true_edges(truth))
        kappa = std::min(kappa, std::abs(truth(i, j)) / std::sqrt(truth(i, i) * truth(j, j)));
    EdgeSet out;
    for (Index j = 0; j < est.cols(); ++j)
        for (Index i = 0; i < j; ++i)
            if (std::abs(est(i, j)) / std::sqrt(std::abs(est(i, i) * est(j, j))) > kappa / 2.0) out.emplace(i, j);
    return out;
}

/// Dual of the graphical lasso: max log det W s.t. |W - S|_inf <= rho, by projected gradient
/// ascent with backtracking. Returns the optimal primal objective value (log det W + p).
double glasso_dual_value(const MatrixXd& s, double rho) {
    const Index p = s.rows();
    MatrixXd w = s + rho * MatrixXd::Identity(p, p);
    auto logdet = [](const MatrixXd& m) {
        Eigen::LLT<MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    };
    auto project = [&](const MatrixXd& m) {
        MatrixXd out = m;
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i < p; ++i) out(i, j) = std::clamp(m(i, j), s(i, j) - rho, s(i, j) + rho);
        return symmetrize(out);
    };
    double f = logdet(w);
    double step = 1.0;
    for (int it = 0; it < 200000; ++it) {
        const MatrixXd grad = w.inverse();
        MatrixXd next;
        double fn = 0.0;
        while (true) {
            next = project(w + step * grad);
            fn = logdet(next);
            if (fn >= f) break;
            step *= 0.5;
        }
        const double gain = fn - f;
        w = next;
        f = fn;
        step *= 1.5;
        if (gain < 1e-15) break;
    }
    return f + static_cast<double>(p);
}

/// Vertex enumeration for min ||b||_1 s.t. |S b - e_j|_inf <= lambda with p = 3,
/// in the lifted variables (b, t), t_k >= |b_k|.
struct LpVertexResult {
    double objective = std::numeric_limits<double>::infinity();
    std::vector<VectorXd> optima;
};

LpVertexResult clime_vertex_oracle(const MatrixXd& s, Index j, double lambda) {
    const Index p = 3, n = 6;
    // Constraints G z <= h.
    MatrixXd g = MatrixXd::Zero(12, n);
    VectorXd h = VectorXd::Zero(12);
    for (Index k = 0; k < p; ++k) {
        g(k, k) = 1.0;
        g(k, p + k) = -1.0;  // b_k - t_k <= 0
        g(p + k, k) = -1.0;
        g(p + k, p + k) = -1.0;  // -b_k - t_k <= 0
    }
    for (Index i = 0; i < p; ++i) {
        const double e = i == j ? 1.0 : 0.0;
        g.row(2 * p + i).head(p) = s.row(i);
        h(2 * p + i) = lambda + e;
        g.row(3 * p + i).head(p) = -s.row(i);
        h(3 * p + i) = lambda - e;
    }
    LpVertexResult res;
    std::vector<int> pick(12, 0);
    std::fill(pick.begin(), pick.begin() + n, 1);
    std::sort(pick.begin(), pick.end());
    do {
        MatrixXd a(n, n);
        VectorXd b(n);
        for (Index r = 0, k = 0; r < 12; ++r) {
            if (!pick[static_cast<std::size_t>(r)]) continue;
            a.row(k) = g.row(r);
            b(k++) = h(r);
        }
        Eigen::FullPivLU<MatrixXd> lu(a);
        if (lu.rank() < n) continue;
        const VectorXd z = lu.solve(b);
        if (((g * z - h).array() > 1e-9).any()) continue;
        const double obj = z.tail(p).sum();
        if (obj < res.objective - 1e-9) {
            res.objective = obj;
            res.optima = {z.head(p)};
        } else if (std::abs(obj - res.objective) <= 1e-9) {
            res.optima.push_back(z.head(p));
        }
    } while (std::next_permutation(pick.begin(), pick.end()));
    return res;
}

}  // namespace

TEST_CASE("lasso_solve limits") {
    const MatrixXd x = gaussian_matrix(40, 4, 1);
    const VectorXd beta = (VectorXd(4) << 1.0, -2.0, 0.0, 0.5).finished();
    const VectorXd y = x * beta + 0.1 * gaussian_matrix(40, 1, 2);
    LassoProblem prob{x, y, 0.0, std::nullopt};
    const VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    CHECK(max_abs_diff(lasso_solve(prob), ols) < 1e-6);

    prob.penalty = (x.transpose() * y).cwiseAbs().maxCoeff() / 40.0;
    CHECK(lasso_solve(prob).cwiseAbs().maxCoeff() == 0.0);

    const MatrixXd x1 = gaussian_matrix(30, 1, 3);
    const VectorXd y1 = 0.7 * x1.col(0) + gaussian_matrix(30, 1, 4);
    const double xx = x1.squaredNorm() / 30.0, xy = x1.col(0).dot(y1) / 30.0;
    for (double pen : {0.0, 0.05, 0.2, 10.0}) {
        LassoProblem one{x1, y1, pen, std::nullopt};
        const double expect = std::copysign(std::max(std::abs(xy) - pen, 0.0), xy) / xx;
        CHECK(lasso_solve(one)(0) == doctest::Approx(expect).epsilon(1e-10));
    }

    LassoProblem both{x, y, 0.1, 1.0};
    CHECK_THROWS_AS(lasso_solve(both), Error);
    LassoProblem bad{x, y.head(10), 0.1, std::nullopt};
    CHECK_THROWS_AS(lasso_solve(bad), Error);
}

TEST_CASE("L1-ball lasso agrees with the penalized path at the matching radius") {
    const MatrixXd x = gaussian_matrix(60, 6, 5);
    const VectorXd y = x * (VectorXd(6) << 1, -1, 0.5, 0, 0, 0.2).finished() + gaussian_matrix(60, 1, 6);
    for (double pen : {0.02, 0.1, 0.3}) {
        const VectorXd wp = lasso_solve({x, y, pen, std::nullopt});
        const double radius = wp.lpNorm<1>();
        const VectorXd wb = lasso_solve({x, y, 0.0, radius});
        CHECK(max_abs_diff(wb, wp) < 1e-5);
    }
    CHECK(lasso_solve({x, y, 0.0, 0.0}).cwiseAbs().maxCoeff() == 0.0);
    const VectorXd v = (VectorXd(3) << 3, -1, 0.5).finished();
    const VectorXd proj = project_l1_ball(v, 2.0);
    CHECK(proj.lpNorm<1>() == doctest::Approx(2.0));
    CHECK(proj(0) == doctest::Approx(2.0));
}

TEST_CASE("L1-ball lasso matches projected gradient and KKT on ill-conditioned Gram matrices") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MatrixXd q = random_spd(5, seed, 0.2);
        const VectorXd c = gaussian_matrix(5, 1, seed + 100).col(0);
        const double radius = 0.1 + 0.1 * static_cast<double>(seed % 10);
        VectorXd w = VectorXd::Zero(5);
        const double step = 1.0 / (q.diagonal().sum());
        for (int it = 0; it < 200000; ++it) w = project_l1_ball(w - step * (q * w - c), radius);
        CHECK(max_abs_diff(lasso_ball_gram(q, c, radius), w) < 1e-7);
    }
    // Brownian-type Gram: correlations min(i,j)/sqrt(ij) are close to 1 for neighbors.
    const Index k = 40;
    MatrixXd q(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) q(i, j) = (std::min(i, j) + 1.0) / std::sqrt((i + 1.0) * (j + 1.0));
    const VectorXd c = q.col(k / 2) + 0.01 * gaussian_matrix(k, 1, 9).col(0);
    for (double radius : {0.01, 0.1, 0.4, 2.0}) {
        const VectorXd w = lasso_ball_gram(q, c, radius);
        const VectorXd g = c - q * w;
        CHECK(w.lpNorm<1>() <= radius * (1.0 + 1e-10));
        if (w.lpNorm<1>() < radius * (1.0 - 1e-9)) {
            CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
            continue;
        }
        // Active coordinates share the largest gradient magnitude, with matching signs.
        const double lam = g.cwiseAbs().maxCoeff();
        for (Index j = 0; j < k; ++j) {
            if (w(j) != 0.0) CHECK(g(j) * (w(j) > 0 ? 1.0 : -1.0) == doctest::Approx(lam).epsilon(1e-8));
        }
    }
}

TEST_CASE("glasso limits") {
    const MatrixXd s = random_spd(6, 11);
    const auto mle = glasso_estimate(as_cov(s), 0.0);
    CHECK(max_abs_diff(mle.matrix, s.inverse()) < 1e-4 * s.inverse().cwiseAbs().maxCoeff());

    MatrixXd off = s;
    off.diagonal().setZero();
    const double rho = off.cwiseAbs().maxCoeff();
    const auto diag = glasso_estimate(as_cov(s), rho);
    for (Index i = 0; i < 6; ++i) CHECK(diag.matrix(i, i) == doctest::Approx(1.0 / (s(i, i) + rho)));
    CHECK(diag.support.empty());

    const MatrixXd x = gaussian_matrix(4, 6, 3);
    try {
        glasso_estimate(as_cov(covariance_of(x)), 0.0);
        FAIL("expected SingularInput");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularInput);
    }
    const auto pd = glasso_estimate(as_cov(covariance_of(x)), 0.1);
    CHECK(min_eigenvalue(pd.matrix) > 0.0);
}

TEST_CASE("glasso matches the dual projected-gradient optimum and is monotone") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MatrixXd s = covariance_of(mvn_panel(random_spd(4, seed + 50), 12, seed + 60));
        const double rho = 0.05 + 0.02 * static_cast<double>(seed % 5);
        GlassoTrace trace;
        const auto est = glasso_estimate(as_cov(s), rho, &trace);
        const double value = glasso_objective(est.matrix, s, rho);
        CHECK(std::abs(value - glasso_dual_value(s, rho)) <= 1e-5);
        for (std::size_t k = 1; k < trace.objective.size(); ++k)
            CHECK(trace.objective[k] <= trace.objective[k - 1] + 1e-12);
    }
}

TEST_CASE("glasso at rho = 0 is scale equivariant") {
    const MatrixXd s = random_spd(5, 3);
    const MatrixXd a = glasso_estimate(as_cov(s), 0.0).matrix;
    for (double c : {0.01, 7.0}) {
        const MatrixXd b = glasso_estimate(as_cov(c * s), 0.0).matrix;
        CHECK(max_abs_diff(c * b, a) < 1e-8 * a.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("mb limits and chain recovery") {
    const MatrixXd ind = gaussian_matrix(20000, 5, 7);
    const MatrixXd est = mb_estimate(panel(ind), 0.001).matrix;
    MatrixXd off = est;
    off.diagonal().setZero();
    CHECK(off.cwiseAbs().maxCoeff() < 0.05);
    CHECK(max_abs_diff(est.diagonal(), VectorXd::Ones(5)) < 0.05);

    const MatrixXd x = gaussian_matrix(50, 4, 8) * VectorXd::LinSpaced(4, 1.0, 3.0).asDiagonal();
    const auto huge = mb_estimate(panel(x), 100.0);
    const MatrixXd s = covariance_of(x);
    CHECK(huge.support.empty());
    for (Index i = 0; i < 4; ++i) CHECK(huge.matrix(i, i) == doctest::Approx(1.0 / s(i, i)));

    const MatrixXd theta = chain_precision(10, 0.5);
    const MatrixXd data = mvn_panel(theta.inverse(), 2000, 9);
    CHECK(kappa_half_edges(mb_estimate(panel(data), 0.05).matrix, theta) == true_edges(theta));
}

TEST_CASE("clime examples") {
    const auto zero = clime_estimate(as_cov(random_spd(4, 1)), 1.0);
    CHECK(zero.matrix.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.degenerate);

    const auto id = clime_estimate(as_cov(MatrixXd::Identity(3, 3)), 0.1);
    CHECK(max_abs_diff(id.matrix, 0.9 * MatrixXd::Identity(3, 3)) < 1e-12);
    CHECK_THROWS_AS(clime_estimate(as_cov(MatrixXd::Identity(3, 3)), 0.0), Error);
}

TEST_CASE("clime columns match vertex enumeration for p = 3") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const MatrixXd s = correlation_from_covariance(random_spd(3, seed + 200, 0.3));
        for (double lambda : {0.05, 0.2}) {
            const MatrixXd cols = clime_columns(s, lambda);
            for (Index j = 0; j < 3; ++j) {
                const auto oracle = clime_vertex_oracle(s, j, lambda);
                CHECK(cols.col(j).lpNorm<1>() == doctest::Approx(oracle.objective).epsilon(1e-6));
                bool unique = true;
                for (const auto& o : oracle.optima) unique = unique && max_abs_diff(o, oracle.optima[0]) < 1e-7;
                if (unique) CHECK(max_abs_diff(cols.col(j), oracle.optima[0]) < 1e-6);
            }
        }
    }
}

TEST_CASE("clime column solutions are feasible") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Index p = 2 + static_cast<Index>(seed % 9);
        const MatrixXd s = covariance_of(gaussian_matrix(2 * p + static_cast<Index>(seed % 30), p, seed));
        const double lambda = 0.02 + 0.05 * static_cast<double>(seed % 7);
        const MatrixXd cols = clime_columns(s, lambda);
        const double resid = (s * cols - MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
        CHECK(resid <= lambda + 1e-8);
    }
}

TEST_CASE("greedy prune examples") {
    MatrixXd x = mvn_panel(chain_precision(6, 0.5).inverse(), 3000, 12);
    x.col(5) = gaussian_matrix(3000, 1, 13);  // node 5 independent of the rest
    const auto est = greedy_prune_estimate(panel(x), 3, 0.05);
    for (Index k = 0; k < 5; ++k) CHECK(est.matrix(k, 5) == 0.0);

    const MatrixXd corr = correlation_from_covariance(covariance_of(x));
    for (Index i = 0; i < 6; ++i) CHECK(greedy_prune_neighborhood(corr, i, 4, 1e-12).size() == 4);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const MatrixXd c = correlation_from_covariance(covariance_of(gaussian_matrix(40, 8, seed)));
        for (Index i = 0; i < 8; ++i) {
            const auto all = greedy_prune_neighborhood(c, i, 5, 1e-12);
            for (double nu : {0.01, 0.05, 0.2}) {
                const auto some = greedy_prune_neighborhood(c, i, 5, nu);
                CHECK(std::includes(all.begin(), all.end(), some.begin(), some.end()));
            }
        }
    }
    CHECK_THROWS_AS(greedy_prune_estimate(panel(x), 6, 0.1), Error);
}

TEST_CASE("greedy prune recovers the attractive two-block model") {
    const MatrixXd theta = two_block_precision(5, 0.95);
    const MatrixXd x = mvn_panel(theta.inverse(), 4000, 14);
    const auto est = greedy_prune_estimate(panel(x), 4, 0.01);
    CHECK(kappa_half_edges(est.matrix, theta) == true_edges(theta));
}

TEST_CASE("hybrid mb behaviour") {
    const MatrixXd theta = chain_precision(10, 0.5);
    const MatrixXd x = mvn_panel(theta.inverse(), 2000, 15);
    const MatrixXd corr = correlation_from_covariance(covariance_of(x));
    for (Index i = 0; i < 10; ++i) CHECK(hybrid_mb_neighborhood(corr, i, 1e-12, 0.05).size() <= 1);

    const auto hy = hybrid_mb_estimate(panel(x), 1.0, 0.05);
    const auto mb = mb_estimate(panel(x), 0.05);
    CHECK(kappa_half_edges(hy.matrix, theta) == true_edges(theta));
    CHECK(kappa_half_edges(hy.matrix, theta) == kappa_half_edges(mb.matrix, theta));

    double false_edges = 0.0;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
        const auto ind = hybrid_mb_estimate(panel(gaussian_matrix(1000, 8, 300 + rep)), 1.0, 0.05);
        false_edges += static_cast<double>(ind.support.size()) * 2.0 / 8.0;
    }
    CHECK(false_edges / 10.0 < 0.25);
}

TEST_CASE("support_and_refit") {
    const MatrixXd s = random_spd(4, 21);
    std::vector<NeighborhoodSet> empty(4);
    for (Index i = 0; i < 4; ++i) empty[static_cast<std::size_t>(i)].node = i;
    const auto diag = support_and_refit(empty, s);
    CHECK(diag.support.empty());
    for (Index i = 0; i < 4; ++i) CHECK(diag.matrix(i, i) == doctest::Approx(1.0 / s(i, i)));

    auto asym = empty;
    asym[1].neighbors = {2};
    const auto un = support_and_refit(asym, s);
    CHECK(un.support == EdgeSet{{1, 2}});

    // Full support reproduces the exact inverse.
    std::vector<NeighborhoodSet> full(4);
    for (Index i = 0; i < 4; ++i) {
        full[static_cast<std::size_t>(i)].node = i;
        for (Index k = 0; k < 4; ++k)
            if (k != i) full[static_cast<std::size_t>(i)].neighbors.push_back(k);
    }
    CHECK(max_abs_diff(support_and_refit(full, s).matrix, s.inverse()) < 1e-8);

    const MatrixXd theta = chain_precision(10, 0.5);
    double err_refit = 0.0, err_lasso = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const MatrixXd x = mvn_panel(theta.inverse(), 300, 400 + rep);
        const MatrixXd sc = covariance_of(x);
        std::vector<NeighborhoodSet> oracle(10);
        for (Index i = 0; i < 10; ++i) {
            oracle[static_cast<std::size_t>(i)].node = i;
            if (i > 0) oracle[static_cast<std::size_t>(i)].neighbors.push_back(i - 1);
            if (i < 9) oracle[static_cast<std::size_t>(i)].neighbors.push_back(i + 1);
        }
        err_refit += (support_and_refit(oracle, sc).matrix - theta).norm();
        err_lasso += (mb_estimate(panel(x), 0.1).matrix - theta).norm();
    }
    CHECK(err_refit < err_lasso);
}

TEST_CASE("every estimator is symmetric with positive diagonal and sparser under heavier penalties") {
    const MatrixXd theta = chain_precision(8, 0.4);
    const MatrixXd x = mvn_panel(theta.inverse(), 120, 31);
    const ReturnsMatrix r = panel(x);
    const MatrixXd corr = correlation_from_covariance(covariance_of(x));
    const std::vector<double> grid{0.01, 0.05, 0.1, 0.2, 0.4};
    std::size_t prev_g = 1000, prev_m = 1000, prev_c = 1000;
    for (double lam : grid) {
        const auto g = glasso_estimate(as_cov(corr), lam);
        const auto m = mb_estimate(r, lam);
        const auto c = clime_estimate(as_cov(corr), lam);
        for (const auto* e : {&g, &m, &c}) {
            CHECK(is_symmetric(e->matrix));
            CHECK((e->matrix.diagonal().array() > 0.0).all());
        }
        CHECK(g.support.size() <= prev_g);
        CHECK(m.support.size() <= prev_m);
        CHECK(c.support.size() <= prev_c);
        prev_g = g.support.size();
        prev_m = m.support.size();
        prev_c = c.support.size();
    }
    for (const auto& e : {greedy_prune_estimate(r, 3, 0.05), hybrid_mb_estimate(r, 1.0, 0.05)}) {
        CHECK(is_symmetric(e.matrix));
        CHECK((e.matrix.diagonal().array() > 0.0).all());
    }
}
