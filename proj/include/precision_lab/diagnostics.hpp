#pragma once

#include "precision_lab/core.hpp"
#include "precision_lab/tuning.hpp"

#include <string>
#include <utility>
#include <vector>

namespace precision_lab {

inline constexpr double kWalkSummableTolerance = 1e-10;
inline constexpr int kWalkSummableMaxIterations = 1000;

/// diag(theta) kept, off-diagonals replaced by -|theta_ij|.
MatrixXd sign_flipped(const MatrixXd& theta);

/// ||Theta_ws - theta||_F / ||theta||_F for the nearest Theta_ws whose sign-flipped matrix is
/// PSD. Zero when the sign-flipped theta already is. Throws ProjectionNonConvergence.
double walk_summability_delta(const MatrixXd& theta);

/// lambda_max / lambda_min; +inf when lambda_min <= 0.
double condition_number(const MatrixXd& symmetric);

/// Entries with |m_ij| > tol over the full matrix, diagonal included.
Index nonzero_count(const MatrixXd& m, double tol = 0.0);

struct PrecisionDiagnostics {
    double cv_error = 0.0;
    Index nonzeros = 0;
    double condition_number = 1.0;
    double delta_ws = 0.0;
};

PrecisionDiagnostics summarize_precision(const PrecisionEstimate& est, const TuneResult& tuning);

/// Delimited table with header Method,CV Error,Non-zeros,Condition No.,Delta WS.
std::string format_diagnostics_table(const std::vector<std::pair<std::string, PrecisionDiagnostics>>& rows);

}  // namespace precision_lab
