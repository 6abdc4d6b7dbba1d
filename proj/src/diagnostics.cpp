#include "precision_lab/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace precision_lab {
namespace {

MatrixXd psd_projection(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    const VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Off-diagonals clipped to <= 0: the sign-flipped pattern.
MatrixXd flipped_pattern_projection(MatrixXd m) {
    const VectorXd d = m.diagonal();
    m = m.cwiseMin(0.0);
    m.diagonal() = d;
    return m;
}

}  // namespace

MatrixXd sign_flipped(const MatrixXd& theta) {
    MatrixXd f = -theta.cwiseAbs();
    f.diagonal() = theta.diagonal();
    return f;
}

double walk_summability_delta(const MatrixXd& theta) {
    const Index p = theta.rows();
    if (p < 1 || theta.cols() != p) throw Error(ErrorKind::DimensionMismatch, "walk summability: matrix must be square");
    const MatrixXd f = sign_flipped(symmetrize(theta));
    if (min_eigenvalue(f) >= -kWalkSummableTolerance) return 0.0;

    // Keeping theta's signs, the distance equals the distance in flipped space, so the nearest
    // point is the projection of f onto PSD intersected with {off-diagonals <= 0} (Dykstra).
    const double scale = f.norm();
    MatrixXd x = f;
    MatrixXd y = f;
    MatrixXd pinc = MatrixXd::Zero(p, p);
    MatrixXd qinc = MatrixXd::Zero(p, p);
    for (int it = 0; it < kWalkSummableMaxIterations; ++it) {
        y = psd_projection(x + pinc);
        pinc = x + pinc - y;
        const MatrixXd next = flipped_pattern_projection(y + qinc);
        qinc = y + qinc - next;
        const double step = (next - x).norm();
        x = next;
        if (step <= kWalkSummableTolerance * scale && (y - x).norm() <= kWalkSummableTolerance * scale) {
            return (y - f).norm() / scale;
        }
    }
    throw Error(ErrorKind::ProjectionNonConvergence,
                "walk summability: no convergence in " + std::to_string(kWalkSummableMaxIterations) + " alternations");
}

double condition_number(const MatrixXd& symmetric) {
    const VectorXd ev = spectral_decompose(symmetric).eigenvalues;
    const double lo = ev(ev.size() - 1);
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return ev(0) / lo;
}

Index nonzero_count(const MatrixXd& m, double tol) {
    return static_cast<Index>((m.array().abs() > tol).count());
}

PrecisionDiagnostics summarize_precision(const PrecisionEstimate& est, const TuneResult& tuning) {
    PrecisionDiagnostics d;
    d.cv_error = tuning.best_score;
    d.nonzeros = nonzero_count(est.matrix);
    d.condition_number = condition_number(est.matrix);
    d.delta_ws = walk_summability_delta(est.matrix);
    return d;
}

std::string format_diagnostics_table(const std::vector<std::pair<std::string, PrecisionDiagnostics>>& rows) {
    std::string out = "Method,CV Error,Non-zeros,Condition No.,Delta WS\n";
    char buf[256];
    for (const auto& [name, d] : rows) {
        std::snprintf(buf, sizeof buf, ",%.10g,%lld,%.10g,%.10g\n", d.cv_error, static_cast<long long>(d.nonzeros),
                      d.condition_number, d.delta_ws);
        out += name;
        out += buf;
    }
    return out;
}

}  // namespace precision_lab
