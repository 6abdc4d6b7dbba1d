#include "precision_lab/synthetic.hpp"

#include "precision_lab/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <random>

namespace precision_lab {
namespace {

/// Relative size below which an assembled precision entry is structural zero.
constexpr double kEdgeTolerance = 1e-12;

double normalized(const MatrixXd& t, Index i, Index j) {
    const double scale = std::sqrt(std::abs(t(i, i) * t(j, j)));
    return scale > 0.0 ? std::abs(t(i, j)) / scale : 0.0;
}

}  // namespace

GgmGroundTruth truth_from_precision(MatrixXd theta, double tol) {
    const Index p = theta.rows();
    if (p < 1 || theta.cols() != p) throw Error(ErrorKind::DimensionMismatch, "truth: theta must be square");
    GgmGroundTruth g;
    g.theta = symmetrize(theta);
    g.sigma = symmetrize(solve_spd(g.theta, MatrixXd::Identity(p, p)).solution);
    g.edges = support_of(g.theta, tol);
    g.kappa = std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : g.edges) g.kappa = std::min(g.kappa, normalized(g.theta, i, j));
    return g;
}

GgmGroundTruth truth_from_covariance(const MatrixXd& sigma, double tol) {
    const Index p = sigma.rows();
    if (p < 1 || sigma.cols() != p) throw Error(ErrorKind::DimensionMismatch, "truth: sigma must be square");
    GgmGroundTruth g = truth_from_precision(solve_spd(sigma, MatrixXd::Identity(p, p)).solution, tol);
    g.sigma = symmetrize(sigma);
    return g;
}

GgmGroundTruth gen_brownian_clique_model(int n, int d, double rho) {
    if (n < 2 || n % 2 != 0 || d < 1 || (n / 2) % d != 0) {
        throw Error(ErrorKind::BadDimensions, "brownian-clique: need even n with d dividing n/2 (n=" +
                                                  std::to_string(n) + ", d=" + std::to_string(d) + ")");
    }
    if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, "brownian-clique: rho must lie in (0,1)");
    const Index h = n / 2;
    MatrixXd theta = MatrixXd::Zero(n, n);
    MatrixXd sigma = MatrixXd::Zero(n, n);

    // Brownian motion observed at tau_i = 1/2 + i/n has covariance min(tau_i, tau_j) and a
    // tridiagonal precision built from the increments tau_1, 1/n, ..., 1/n.
    const double inv_step = static_cast<double>(n);
    for (Index i = 0; i < h; ++i) {
        for (Index j = 0; j < h; ++j) sigma(i, j) = 0.5 + static_cast<double>(std::min(i, j) + 1) / n;
        const double left = i == 0 ? 1.0 / (0.5 + 1.0 / n) : inv_step;
        const double right = i + 1 < h ? inv_step : 0.0;
        theta(i, i) = left + right;
        if (i + 1 < h) theta(i, i + 1) = theta(i + 1, i) = -inv_step;
    }

    // Clique block: (I - a 11')^-1 = I + a / (1 - a d) 11' with a = rho/d, so every coordinate
    // has variance 1 + a / (1 - rho) before rescaling.
    const double a = rho / d;
    const double c = a / (1.0 - rho);
    const double var0 = 1.0 + c;
    for (Index b = h; b < n; b += d) {
        for (Index i = 0; i < d; ++i) {
            for (Index j = 0; j < d; ++j) {
                const double t0 = (i == j ? 1.0 : 0.0) - a;
                const double s0 = (i == j ? 1.0 : 0.0) + c;
                theta(b + i, b + j) = t0 * var0;
                sigma(b + i, b + j) = s0 / var0;
            }
        }
    }

    GgmGroundTruth g;
    g.theta = theta;
    g.sigma = sigma;
    g.edges = support_of(theta, kEdgeTolerance * theta.cwiseAbs().maxCoeff());
    g.kappa = std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : g.edges) g.kappa = std::min(g.kappa, normalized(theta, i, j));
    return g;
}

GgmGroundTruth market_factor_model(int p, int sectors, std::uint64_t seed) {
    if (p < 2 || sectors < 1 || sectors > p) throw Error(ErrorKind::BadDimensions, "factor model: need 1 <= sectors <= p");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> beta(0.6, 1.4), gamma(0.4, 1.0), idio(0.008, 0.02);
    constexpr double market_vol = 0.01;
    constexpr double sector_vol = 0.007;
    MatrixXd loadings = MatrixXd::Zero(p, 1 + sectors);
    VectorXd noise(p);
    for (Index i = 0; i < p; ++i) {
        loadings(i, 0) = market_vol * beta(rng);
        loadings(i, 1 + i * sectors / p) = sector_vol * gamma(rng);
        const double s = idio(rng);
        noise(i) = s * s;
    }
    MatrixXd sigma = loadings * loadings.transpose();
    sigma.diagonal() += noise;
    return truth_from_covariance(sigma);
}

ReturnsMatrix sample_mvn(const MatrixXd& sigma, Index m, std::uint64_t seed) {
    if (m < 2) throw Error(ErrorKind::InvalidArgument, "sample_mvn: m must be >= 2");
    const Index p = sigma.rows();
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "sample_mvn: sigma is not SPD");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    MatrixXd z(m, p);
    for (Index t = 0; t < m; ++t) {
        for (Index j = 0; j < p; ++j) z(t, j) = nd(rng);
    }
    return ReturnsMatrix::unlabeled(z * llt.matrixU());
}

ReturnsMatrix sample_mvn(const GgmGroundTruth& truth, Index m, std::uint64_t seed) {
    return sample_mvn(truth.sigma, m, seed);
}

EdgeSet kappa_half_edges(const MatrixXd& theta_hat, double kappa) {
    EdgeSet out;
    const Index p = theta_hat.rows();
    for (Index i = 0; i < p; ++i) {
        for (Index j = i + 1; j < p; ++j) {
            if (normalized(theta_hat, i, j) > kappa / 2.0) out.emplace(i, j);
        }
    }
    return out;
}

RecoveryReport edge_recovery_error(const PrecisionEstimate& est, const GgmGroundTruth& truth) {
    const Index p = truth.theta.rows();
    if (est.matrix.rows() != p || est.matrix.cols() != p) {
        throw Error(ErrorKind::DimensionMismatch, "edge recovery: estimate and truth differ in size");
    }
    const EdgeSet predicted = kappa_half_edges(est.matrix, truth.kappa);
    RecoveryReport rep;
    std::set_difference(truth.edges.begin(), truth.edges.end(), predicted.begin(), predicted.end(),
                        std::inserter(rep.missed, rep.missed.end()));
    std::set_difference(predicted.begin(), predicted.end(), truth.edges.begin(), truth.edges.end(),
                        std::inserter(rep.spurious, rep.spurious.end()));
    rep.incorrect_edges_per_node = static_cast<double>(rep.missed.size() + rep.spurious.size()) / static_cast<double>(p);
    return rep;
}

PrecisionMethod tuned_ggm(GgmMethod m, Criterion criterion, int threads) {
    return [m, criterion, threads](const ReturnsMatrix& r) {
        TuneConfig cfg;
        cfg.criterion = criterion;
        cfg.threads = threads;
        return tune_estimator(r, m, cfg).first;
    };
}

ComplexityPoint sample_complexity(const PrecisionMethod& method, int n, const ComplexityOptions& o) {
    if (o.trials < 1) throw Error(ErrorKind::InvalidArgument, "sample complexity: trials must be >= 1");
    if (o.ladder_start < 2 || o.cap < o.ladder_start) {
        throw Error(ErrorKind::InvalidArgument, "sample complexity: need 2 <= ladder start <= cap");
    }
    const GgmGroundTruth truth = gen_brownian_clique_model(n, o.d, o.rho);
    const int needed = (o.trials + 1) / 2;
    ComplexityPoint point;
    point.n = n;

    // Trial seeds depend on (n, m, trial) only, so methods see common samples.
    const auto successes = [&](Index m) {
        std::vector<int> ok(static_cast<std::size_t>(o.trials), 0);
        parallel_for(ok.size(), o.threads, [&](std::size_t t) {
            const std::uint64_t s = derive_seed(derive_seed(derive_seed(o.seed, static_cast<std::uint64_t>(n)),
                                                            static_cast<std::uint64_t>(m)),
                                                t);
            const ReturnsMatrix x = sample_mvn(truth, m, s);
            try {
                ok[t] = edge_recovery_error(method(x), truth).incorrect_edges_per_node <= o.target ? 1 : 0;
            } catch (const Error& e) {
                // A failed fit counts as a failed trial.
                spdlog::debug("sample complexity n={} m={} trial {}: {}", n, m, t, e.what());
            }
        });
        int count = 0;
        for (int v : ok) count += v;
        point.evaluations.emplace_back(m, count);
        return count >= needed;
    };

    Index lo = 0;
    Index hi = o.ladder_start;
    while (!successes(hi)) {
        if (hi >= o.cap) {
            throw Error(ErrorKind::Unreachable, "sample complexity: target not reached at cap m=" + std::to_string(o.cap) +
                                                    " (n=" + std::to_string(n) + ")");
        }
        lo = hi;
        hi = std::min(2 * hi, o.cap);
    }
    if (lo > 0) {
        while (static_cast<double>(hi - lo) > std::max(1.0, o.resolution * static_cast<double>(hi))) {
            const Index mid = lo + (hi - lo) / 2;
            (successes(mid) ? hi : lo) = mid;
        }
    }
    point.m_star = hi;
    return point;
}

std::vector<ComplexityPoint> sample_complexity_curve(const PrecisionMethod& method, const std::vector<int>& sizes,
                                                     const ComplexityOptions& options) {
    std::vector<ComplexityPoint> out;
    out.reserve(sizes.size());
    for (int n : sizes) out.push_back(sample_complexity(method, n, options));
    return out;
}

MatrixXd precision_of(const Estimate& est) {
    if (const auto* pe = std::get_if<PrecisionEstimate>(&est)) return pe->matrix;
    const MatrixXd& s = std::get<CovarianceEstimate>(est).matrix;
    const Index p = s.rows();
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() == Eigen::Success) return symmetrize(llt.solve(MatrixXd::Identity(p, p)));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "precision_of: covariance has no positive eigenvalue");
    const VectorXd inv = es.eigenvalues().cwiseMax(1e-8 * top).cwiseInverse();
    return symmetrize(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose());
}

std::vector<FrobeniusRow> frobenius_experiment(const GgmGroundTruth& truth,
                                               const std::vector<std::pair<std::string, AnyMethod>>& methods, Index m,
                                               int reps, std::uint64_t seed, int threads) {
    if (reps < 2) throw Error(ErrorKind::InvalidArgument, "frobenius experiment: reps must be >= 2");
    const std::size_t k = methods.size();
    MatrixXd err(reps, static_cast<Index>(k));
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
        const ReturnsMatrix x = sample_mvn(truth, m, derive_seed(seed, r));
        for (std::size_t j = 0; j < k; ++j) {
            err(static_cast<Index>(r), static_cast<Index>(j)) = (truth.theta - precision_of(methods[j].second(x))).norm();
        }
    });
    std::vector<FrobeniusRow> out;
    for (std::size_t j = 0; j < k; ++j) {
        const VectorXd e = err.col(static_cast<Index>(j));
        const double mean = e.mean();
        const double var = (e.array() - mean).square().sum() / (reps - 1);
        out.push_back({methods[j].first, mean, std::sqrt(var / reps)});
    }
    return out;
}

}  // namespace precision_lab
