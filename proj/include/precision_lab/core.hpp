#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace precision_lab {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
    InvalidArgument,
    ParseError,
    EmptyPanel,
    NonPositivePrice,
    HorizonTooLarge,
    DimensionMismatch,
    NotPositiveDefinite,
    ConvergenceFailure,
    NonConvergence,
    SingularInput,
    ZeroResidualVariance,
    Infeasible,
    SolverStall,
    DegenerateTarget,
    DegenerateSpectrum,
    DegenerateDenominator,
    DegenerateWeights,
    ZeroDiagonal,
    TooFewRows,
    AllPointsFailed,
    IncomparableSeries,
    SeriesTooShort,
    BadDimensions,
    Unreachable,
    ProjectionNonConvergence,
    ConfigError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// T x p panel of log-returns (rows = time, columns = assets). Construction accepts T, p >= 1 so
/// that one-row test slices and single-asset panels are representable; estimators enforce their
/// own minimum sizes.
class ReturnsMatrix {
public:
    ReturnsMatrix(MatrixXd values, std::vector<std::string> dates, std::vector<std::string> tickers);

    /// Synthetic labels: dates "t000000".., tickers "x0"..
    static ReturnsMatrix unlabeled(MatrixXd values);

    [[nodiscard]] const MatrixXd& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<std::string>& dates() const noexcept { return dates_; }
    [[nodiscard]] const std::vector<std::string>& tickers() const noexcept { return tickers_; }
    [[nodiscard]] Index periods() const noexcept { return values_.rows(); }
    [[nodiscard]] Index assets() const noexcept { return values_.cols(); }

    /// Rows [begin, end).
    [[nodiscard]] ReturnsMatrix slice(Index begin, Index end) const;
    /// Arbitrary ordered subset of rows (dates must stay increasing).
    [[nodiscard]] ReturnsMatrix rows(const std::vector<Index>& idx) const;

private:
    MatrixXd values_;
    std::vector<std::string> dates_;
    std::vector<std::string> tickers_;
};

struct CovarianceEstimate {
    MatrixXd matrix;
    std::string method;
    std::optional<double> intensity;
    std::optional<double> threshold;
    /// Smallest eigenvalue, reported for estimators that can lose definiteness.
    std::optional<double> min_eigenvalue;
    std::vector<std::string> warnings;
};

using ParamMap = std::map<std::string, double>;
using EdgeSet = std::set<std::pair<Index, Index>>;

struct PrecisionEstimate {
    MatrixXd matrix;
    std::string method;
    ParamMap hyperparams;
    EdgeSet support;  // pairs (i, j) with i < j
    bool degenerate = false;
    std::vector<std::string> warnings;
};

struct SpdSolveReport {
    MatrixXd solution;
    double condition_estimate = 1.0;
};

struct SpectralDecomposition {
    VectorXd eigenvalues;   // descending
    MatrixXd eigenvectors;  // columns match eigenvalues
};

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kSolveTolerance = 1e-8;

/// Solves A X = B for symmetric positive-definite A through a Cholesky factorization.
SpdSolveReport solve_spd(const MatrixXd& a, const MatrixXd& b);

SpectralDecomposition spectral_decompose(const MatrixXd& a);

/// (M + M^T) / 2
MatrixXd symmetrize(const MatrixXd& m);

bool is_symmetric(const MatrixXd& m, double rel_tol = kSymmetryTolerance);

double min_eigenvalue(const MatrixXd& symmetric);

/// Off-diagonal support of a matrix: pairs (i < j) with |m_ij| > tol in either triangle.
EdgeSet support_of(const MatrixXd& m, double tol = 0.0);

/// Builds a PrecisionEstimate, symmetrizing the matrix and deriving the support.
PrecisionEstimate make_precision(MatrixXd matrix, std::string method, ParamMap hyperparams = {});

/// Column-centered copy of the data.
MatrixXd centered(const MatrixXd& x);

/// Correlation matrix from a covariance matrix. Zero-variance coordinates get unit diagonal.
MatrixXd correlation_from_covariance(const MatrixXd& cov);

/// Seed for the k-th independent stream derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace precision_lab
