#include "precision_lab/covariance.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

namespace precision_lab {
namespace {

void require_periods(const ReturnsMatrix& r, Index min_t, const char* who) {
    if (r.periods() < min_t) {
        throw Error(ErrorKind::TooFewRows, std::string(who) + ": needs T >= " + std::to_string(min_t) + ", got " +
                                               std::to_string(r.periods()));
    }
}

CovarianceEstimate make_cov(MatrixXd m, std::string method) {
    CovarianceEstimate est;
    est.matrix = symmetrize(m);
    est.method = std::move(method);
    return est;
}

ShrinkageResult toward_scaled_identity(const MatrixXd& s, double intensity, std::string method) {
    const Index p = s.rows();
    const double mu = s.trace() / static_cast<double>(p);
    ShrinkageResult out;
    out.intensity = std::clamp(intensity, 0.0, 1.0);
    out.target_kind = TargetKind::scaled_identity;
    out.estimate = make_cov((1.0 - out.intensity) * s + out.intensity * mu * MatrixXd::Identity(p, p),
                            std::move(method));
    out.estimate.intensity = out.intensity;
    return out;
}

}  // namespace

MatrixXd covariance_of(const MatrixXd& x) {
    const MatrixXd xc = centered(x);
    return symmetrize(xc.transpose() * xc / static_cast<double>(x.rows()));
}

CovarianceEstimate sample_covariance(const ReturnsMatrix& r) {
    require_periods(r, 2, "sample_covariance");
    return make_cov(covariance_of(r.values()), "sample");
}

ShrinkageResult shrink_lw_linear(const ReturnsMatrix& r) {
    require_periods(r, 2, "shrink_lw_linear");
    const MatrixXd x = centered(r.values());
    const double t = static_cast<double>(r.periods());
    const double p = static_cast<double>(r.assets());
    const MatrixXd s = symmetrize(x.transpose() * x / t);
    const double mu = s.trace() / p;
    const double d2 = (s - mu * MatrixXd::Identity(r.assets(), r.assets())).squaredNorm() / p;
    if (!(d2 > 0.0)) return toward_scaled_identity(s, 0.0, "lwl");
    // sum_t ||x_t x_t' - S||_F^2 = sum_t ||x_t||^4 - T ||S||_F^2
    const double fourth = x.rowwise().squaredNorm().squaredNorm();
    const double b_bar2 = std::max(0.0, fourth - t * s.squaredNorm()) / (t * t * p);
    return toward_scaled_identity(s, std::min(b_bar2, d2) / d2, "lwl");
}

ShrinkageResult shrink_rblw(const ReturnsMatrix& r) {
    require_periods(r, 2, "shrink_rblw");
    const MatrixXd s = covariance_of(r.values());
    const double n = static_cast<double>(r.periods());
    const double p = static_cast<double>(r.assets());
    const double tr = s.trace();
    const double tr2 = s.squaredNorm();  // tr(S^2) for symmetric S
    const double denom = (n + 2.0) * (tr2 - tr * tr / p);
    if (!(denom > 0.0)) return toward_scaled_identity(s, 0.0, "rblw");
    const double rho = ((n - 2.0) / n * tr2 + tr * tr) / denom;
    return toward_scaled_identity(s, std::min(rho, 1.0), "rblw");
}

double oas_closed_form(const MatrixXd& s, Index periods) {
    const double n = static_cast<double>(periods);
    const double p = static_cast<double>(s.rows());
    const double tr = s.trace();
    const double tr2 = s.squaredNorm();
    const double denom = (n + 1.0 - 2.0 / p) * (tr2 - tr * tr / p);
    if (!(denom > 0.0)) return 0.0;
    return std::clamp(((1.0 - 2.0 / p) * tr2 + tr * tr) / denom, 0.0, 1.0);
}

ShrinkageResult shrink_oas(const ReturnsMatrix& r) {
    require_periods(r, 2, "shrink_oas");
    const MatrixXd s = covariance_of(r.values());
    const double n = static_cast<double>(r.periods());
    const double p = static_cast<double>(r.assets());
    const double mu = s.trace() / p;
    const double tr_s2 = s.squaredNorm();
    const double tr_s = s.trace();

    // With Sigma_j = (1 - rho) S + rho mu I, both traces are affine/quadratic in rho.
    auto step = [&](double rho) {
        const double tr_sigma_s = (1.0 - rho) * tr_s2 + rho * mu * tr_s;
        const double tr_sigma = tr_s;  // trace is preserved by the convex combination
        const double num = (1.0 - 2.0 / p) * tr_sigma_s + tr_sigma * tr_sigma;
        const double den = (n + 1.0 - 2.0 / p) * tr_sigma_s + (1.0 - n / p) * tr_sigma * tr_sigma;
        if (!(den > 0.0)) return 1.0;
        return std::clamp(num / den, 0.0, 1.0);
    };

    std::vector<double> iterates;
    double rho = 0.0;
    bool converged = false;
    for (int it = 0; it < 100 && !converged; ++it) {
        const double next = step(rho);
        iterates.push_back(next);
        converged = std::abs(next - rho) < 1e-10;
        rho = next;
    }
    ShrinkageResult res = toward_scaled_identity(s, rho, "oas");
    res.iterates = std::move(iterates);
    res.converged = converged;
    if (!converged) {
        res.estimate.warnings.emplace_back("NonConvergence");
        spdlog::debug("shrink_oas: fixed-point iteration hit 100 steps, rho={}", rho);
    }
    return res;
}

ShrinkageResult shrink_bodnar(const ReturnsMatrix& r, const MatrixXd& target) {
    require_periods(r, 2, "shrink_bodnar");
    const Index p = r.assets();
    const MatrixXd s = covariance_of(r.values());
    const MatrixXd t0 = target.size() == 0 ? MatrixXd::Identity(p, p) : target;
    if (t0.rows() != p || t0.cols() != p) {
        throw Error(ErrorKind::DimensionMismatch, "shrink_bodnar: target must be p x p");
    }
    if (!is_symmetric(t0) || !(min_eigenvalue(t0) > 0.0)) {
        throw Error(ErrorKind::DegenerateTarget, "shrink_bodnar: target is not symmetric positive definite");
    }
    const double n = static_cast<double>(r.periods());
    const double tr_s = s.trace();
    const double tr_s2 = s.squaredNorm();
    const double tr_st = (s.array() * t0.array()).sum();
    const double tr_t2 = t0.squaredNorm();
    const double denom = tr_s2 - tr_st * tr_st / tr_t2;
    // denom <= 0 only when S is proportional to the target; alpha = 0 then reproduces S.
    double alpha = denom > 0.0 ? 1.0 - (tr_s * tr_s / n) / denom : 0.0;
    alpha = std::clamp(alpha, 0.0, 1.0);
    const double beta = std::max(0.0, (1.0 - alpha) * tr_st / tr_t2);

    ShrinkageResult out;
    out.intensity = 1.0 - alpha;
    out.target_kind = target.size() == 0 ? TargetKind::identity : TargetKind::user_matrix;
    out.estimate = make_cov(alpha * s + beta * t0, "bdl");
    out.estimate.intensity = out.intensity;
    return out;
}

CovarianceEstimate shrink_lw_nonlinear(const ReturnsMatrix& r) {
    require_periods(r, 12, "shrink_lw_nonlinear");
    const MatrixXd s = covariance_of(r.values());
    const Index p = r.assets();
    // Demeaning costs one degree of freedom: the sample spectrum has at most T - 1 non-null values.
    const Index n = r.periods() - 1;
    const double pd = static_cast<double>(p);
    const double nd = static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    if (es.info() != Eigen::Success) {
        throw Error(ErrorKind::ConvergenceFailure, "shrink_lw_nonlinear: eigen-solver did not converge");
    }
    const VectorXd& all = es.eigenvalues();  // ascending
    const MatrixXd& u = es.eigenvectors();
    const double top = all(p - 1);
    if (!(top > 0.0) || all(0) >= top * (1.0 - 1e-12)) {
        CovarianceEstimate out = make_cov(s, "lwnl");
        out.warnings.emplace_back("DegenerateSpectrum");
        return out;
    }

    const Index m = std::min(p, n);
    const VectorXd lambda = all.tail(m).cwiseMax(std::numeric_limits<double>::min());
    const double h = std::pow(nd, -1.0 / 3.0);
    const double sqrt5 = std::sqrt(5.0);
    const double pi = std::numbers::pi;

    VectorXd f(m), hf(m);
    for (Index i = 0; i < m; ++i) {
        double fs = 0.0, hs = 0.0;
        for (Index j = 0; j < m; ++j) {
            const double bw = h * lambda(j);
            const double x = (lambda(i) - lambda(j)) / bw;
            fs += 3.0 / (4.0 * sqrt5) * std::max(1.0 - x * x / 5.0, 0.0) / bw;
            double ht = -3.0 / (10.0 * pi) * x;
            if (std::abs(std::abs(x) - sqrt5) > 0.0) {
                ht += 3.0 / (4.0 * sqrt5 * pi) * (1.0 - x * x / 5.0) * std::log(std::abs((sqrt5 - x) / (sqrt5 + x)));
            }
            hs += ht / bw;
        }
        f(i) = fs / static_cast<double>(m);
        hf(i) = hs / static_cast<double>(m);
    }

    VectorXd d(p);
    const double c = pd / nd;
    if (p <= n) {
        for (Index i = 0; i < m; ++i) {
            const double a = pi * c * lambda(i) * f(i);
            const double b = 1.0 - c - pi * c * lambda(i) * hf(i);
            d(i) = lambda(i) / (a * a + b * b);
        }
    } else {
        if (std::sqrt(5.0) * h >= 1.0) {
            throw Error(ErrorKind::TooFewRows, "shrink_lw_nonlinear: bandwidth too wide for the null-space formula");
        }
        const double hf0 = (1.0 / pi) *
                           (3.0 / (10.0 * h * h) + 3.0 / (4.0 * sqrt5 * h) * (1.0 - 1.0 / (5.0 * h * h)) *
                                                      std::log((1.0 + sqrt5 * h) / (1.0 - sqrt5 * h))) *
                           lambda.cwiseInverse().mean();
        const double d0 = 1.0 / (pi * (pd - nd) / nd * hf0);
        d.head(p - m).setConstant(d0);
        for (Index i = 0; i < m; ++i) {
            d(p - m + i) = lambda(i) / (pi * pi * lambda(i) * lambda(i) * (f(i) * f(i) + hf(i) * hf(i)));
        }
    }
    return make_cov(u * d.asDiagonal() * u.transpose(), "lwnl");
}

CovarianceEstimate threshold_hard(const CovarianceEstimate& s, double tau) {
    if (tau < 0.0) throw Error(ErrorKind::InvalidArgument, "threshold_hard: tau must be >= 0");
    CovarianceEstimate out = make_cov(s.matrix, "hard");
    for (Index j = 0; j < out.matrix.cols(); ++j)
        for (Index i = 0; i < out.matrix.rows(); ++i)
            if (i != j && std::abs(out.matrix(i, j)) <= tau) out.matrix(i, j) = 0.0;
    out.threshold = tau;
    out.min_eigenvalue = min_eigenvalue(out.matrix);
    return out;
}

CovarianceEstimate threshold_soft(const CovarianceEstimate& s, double tau) {
    if (tau < 0.0) throw Error(ErrorKind::InvalidArgument, "threshold_soft: tau must be >= 0");
    CovarianceEstimate out = make_cov(s.matrix, "soft");
    for (Index j = 0; j < out.matrix.cols(); ++j) {
        for (Index i = 0; i < out.matrix.rows(); ++i) {
            if (i == j) continue;
            const double z = out.matrix(i, j);
            out.matrix(i, j) = std::copysign(std::max(std::abs(z) - tau, 0.0), z);
        }
    }
    out.threshold = tau;
    out.min_eigenvalue = min_eigenvalue(out.matrix);
    return out;
}

CovarianceEstimate threshold_adaptive(const CovarianceEstimate& s, const ReturnsMatrix& r, double delta) {
    if (delta < 0.0) throw Error(ErrorKind::InvalidArgument, "threshold_adaptive: delta must be >= 0");
    const Index p = r.assets();
    if (s.matrix.rows() != p || s.matrix.cols() != p) {
        throw Error(ErrorKind::DimensionMismatch, "threshold_adaptive: S and panel disagree on p");
    }
    const MatrixXd x = centered(r.values());
    const double t = static_cast<double>(r.periods());
    const double scale = std::log(static_cast<double>(p)) / t;
    CovarianceEstimate out = make_cov(s.matrix, "adaptive");
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < j; ++i) {
            const VectorXd prod = x.col(i).cwiseProduct(x.col(j));
            const double mean = prod.mean();
            const double theta = (prod.array() - mean).square().sum() / t;
            const double level = delta * std::sqrt(theta * scale);
            const double z = out.matrix(i, j);
            const double v = std::copysign(std::max(std::abs(z) - level, 0.0), z);
            out.matrix(i, j) = v;
            out.matrix(j, i) = v;
        }
    }
    out.threshold = delta;
    out.min_eigenvalue = min_eigenvalue(out.matrix);
    return out;
}

std::pair<CovarianceEstimate, CleanedSpectrum> rie_clean(const ReturnsMatrix& r) {
    require_periods(r, 3, "rie_clean");
    const Index p = r.assets();
    const MatrixXd s = covariance_of(r.values());
    const VectorXd var = s.diagonal();
    if (!(var.minCoeff() > 0.0)) {
        throw Error(ErrorKind::DegenerateSpectrum, "rie_clean: an asset has zero sample variance");
    }
    const VectorXd sd = var.cwiseSqrt();
    const MatrixXd corr = correlation_from_covariance(s);
    const SpectralDecomposition eig = spectral_decompose(corr);

    const double t = static_cast<double>(r.periods());
    const double pd = static_cast<double>(p);
    CleanedSpectrum spec;
    spec.q = pd / t;
    spec.raw_eigenvalues = eig.eigenvalues;
    spec.eigenvectors = eig.eigenvectors;
    const double eta = 1.0 / std::sqrt(t);

    VectorXd xi(p);
    for (Index k = 0; k < p; ++k) {
        const double lk = std::max(eig.eigenvalues(k), 0.0);
        const std::complex<double> z(lk, eta);
        std::complex<double> g(0.0, 0.0);
        for (Index j = 0; j < p; ++j) g += 1.0 / (z - eig.eigenvalues(j));
        g /= pd;
        const double denom = std::norm(1.0 - spec.q + spec.q * lk * g);
        xi(k) = denom > 0.0 ? lk / denom : 0.0;
    }
    const double total = xi.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::DegenerateSpectrum, "rie_clean: cleaned spectrum vanished");
    xi *= pd / total;
    spec.cleaned_eigenvalues = xi;
    spec.cleaned_correlation = symmetrize(eig.eigenvectors * xi.asDiagonal() * eig.eigenvectors.transpose());

    CovarianceEstimate est = make_cov(sd.asDiagonal() * spec.cleaned_correlation * sd.asDiagonal(), "rie");
    return {std::move(est), std::move(spec)};
}

}  // namespace precision_lab
