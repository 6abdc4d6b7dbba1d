#include "precision_lab/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace precision_lab {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::EmptyPanel: return "EmptyPanel";
        case ErrorKind::NonPositivePrice: return "NonPositivePrice";
        case ErrorKind::HorizonTooLarge: return "HorizonTooLarge";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::SingularInput: return "SingularInput";
        case ErrorKind::ZeroResidualVariance: return "ZeroResidualVariance";
        case ErrorKind::Infeasible: return "Infeasible";
        case ErrorKind::SolverStall: return "SolverStall";
        case ErrorKind::DegenerateTarget: return "DegenerateTarget";
        case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
        case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
        case ErrorKind::DegenerateWeights: return "DegenerateWeights";
        case ErrorKind::ZeroDiagonal: return "ZeroDiagonal";
        case ErrorKind::TooFewRows: return "TooFewRows";
        case ErrorKind::AllPointsFailed: return "AllPointsFailed";
        case ErrorKind::IncomparableSeries: return "IncomparableSeries";
        case ErrorKind::SeriesTooShort: return "SeriesTooShort";
        case ErrorKind::BadDimensions: return "BadDimensions";
        case ErrorKind::Unreachable: return "Unreachable";
        case ErrorKind::ProjectionNonConvergence: return "ProjectionNonConvergence";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

ReturnsMatrix::ReturnsMatrix(MatrixXd values, std::vector<std::string> dates,
                             std::vector<std::string> tickers)
    : values_(std::move(values)), dates_(std::move(dates)), tickers_(std::move(tickers)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
        throw Error(ErrorKind::EmptyPanel, "returns panel needs T >= 1 and p >= 1, got " +
                                               std::to_string(values_.rows()) + "x" +
                                               std::to_string(values_.cols()));
    }
    if (static_cast<Index>(dates_.size()) != values_.rows() ||
        static_cast<Index>(tickers_.size()) != values_.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "labels do not match the value matrix");
    }
    if (!values_.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "returns panel contains non-finite values");
    }
    for (std::size_t t = 1; t < dates_.size(); ++t) {
        if (!(dates_[t - 1] < dates_[t])) {
            throw Error(ErrorKind::InvalidArgument,
                        "dates not strictly increasing at '" + dates_[t] + "'");
        }
    }
}

ReturnsMatrix ReturnsMatrix::unlabeled(MatrixXd values) {
    std::vector<std::string> dates(static_cast<std::size_t>(values.rows()));
    std::vector<std::string> tickers(static_cast<std::size_t>(values.cols()));
    char buf[32];
    for (std::size_t t = 0; t < dates.size(); ++t) {
        std::snprintf(buf, sizeof buf, "t%07zu", t);
        dates[t] = buf;
    }
    for (std::size_t j = 0; j < tickers.size(); ++j) tickers[j] = "x" + std::to_string(j);
    return ReturnsMatrix(std::move(values), std::move(dates), std::move(tickers));
}

ReturnsMatrix ReturnsMatrix::slice(Index begin, Index end) const {
    if (begin < 0 || end > periods() || end - begin < 1) {
        throw Error(ErrorKind::InvalidArgument, "invalid row slice");
    }
    std::vector<std::string> d(dates_.begin() + begin, dates_.begin() + end);
    return ReturnsMatrix(values_.middleRows(begin, end - begin), std::move(d), tickers_);
}

ReturnsMatrix ReturnsMatrix::rows(const std::vector<Index>& idx) const {
    MatrixXd v(static_cast<Index>(idx.size()), assets());
    std::vector<std::string> d;
    d.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        v.row(static_cast<Index>(k)) = values_.row(idx[k]);
        d.push_back(dates_[static_cast<std::size_t>(idx[k])]);
    }
    return ReturnsMatrix(std::move(v), std::move(d), tickers_);
}

SpdSolveReport solve_spd(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != a.cols() || b.rows() != a.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "solve_spd: shapes do not conform");
    }
    if (!is_symmetric(a)) {
        throw Error(ErrorKind::InvalidArgument, "solve_spd: matrix is not symmetric");
    }
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "solve_spd: Cholesky factorization failed");
    }
    const MatrixXd& l = llt.matrixLLT();
    const double min_pivot = l.diagonal().minCoeff();
    if (!(min_pivot > 0.0)) {
        throw Error(ErrorKind::NotPositiveDefinite, "solve_spd: non-positive pivot");
    }
    SpdSolveReport report;
    report.solution = llt.solve(b);
    const double rcond = llt.rcond();
    report.condition_estimate = rcond > 0.0 ? std::max(1.0, 1.0 / rcond)
                                            : std::numeric_limits<double>::infinity();
    return report;
}

SpectralDecomposition spectral_decompose(const MatrixXd& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "spectral_decompose: matrix is not square");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    if (es.info() != Eigen::Success) {
        throw Error(ErrorKind::ConvergenceFailure, "spectral_decompose: eigen-solver did not converge");
    }
    SpectralDecomposition out;
    out.eigenvalues = es.eigenvalues().reverse();
    out.eigenvectors = es.eigenvectors().rowwise().reverse();
    return out;
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

bool is_symmetric(const MatrixXd& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

double min_eigenvalue(const MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
        throw Error(ErrorKind::ConvergenceFailure, "min_eigenvalue: eigen-solver did not converge");
    }
    return es.eigenvalues()(0);
}

EdgeSet support_of(const MatrixXd& m, double tol) {
    EdgeSet edges;
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < j; ++i) {
            if (std::abs(m(i, j)) > tol || std::abs(m(j, i)) > tol) edges.emplace(i, j);
        }
    }
    return edges;
}

PrecisionEstimate make_precision(MatrixXd matrix, std::string method, ParamMap hyperparams) {
    PrecisionEstimate est;
    est.matrix = symmetrize(matrix);
    est.method = std::move(method);
    est.hyperparams = std::move(hyperparams);
    est.support = support_of(est.matrix);
    est.degenerate = !(est.matrix.diagonal().array() > 0.0).all();
    return est;
}

MatrixXd centered(const MatrixXd& x) {
    return x.rowwise() - x.colwise().mean();
}

MatrixXd correlation_from_covariance(const MatrixXd& cov) {
    VectorXd inv_sd(cov.rows());
    for (Index i = 0; i < cov.rows(); ++i) {
        inv_sd(i) = cov(i, i) > 0.0 ? 1.0 / std::sqrt(cov(i, i)) : 0.0;
    }
    MatrixXd r = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    for (Index i = 0; i < cov.rows(); ++i) r(i, i) = 1.0;
    return symmetrize(r);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    // splitmix64 over (master, stream)
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace precision_lab
