#pragma once

#include "precision_lab/core.hpp"

#include <utility>
#include <vector>

namespace precision_lab {

enum class TargetKind { identity, scaled_identity, user_matrix };

struct ShrinkageResult {
    CovarianceEstimate estimate;
    double intensity = 0.0;
    TargetKind target_kind = TargetKind::scaled_identity;
    /// OAS only: intensity after each fixed-point step.
    std::vector<double> iterates;
    bool converged = true;
};

struct CleanedSpectrum {
    VectorXd raw_eigenvalues;      // descending
    VectorXd cleaned_eigenvalues;  // same order as raw
    MatrixXd eigenvectors;         // basis of the sample correlation matrix
    MatrixXd cleaned_correlation;
    double q = 0.0;                // p / T
};

/// 1/T covariance of the rows of x.
MatrixXd covariance_of(const MatrixXd& x);

CovarianceEstimate sample_covariance(const ReturnsMatrix& r);

/// Shrinks toward (tr S / p) I with the Ledoit-Wolf (2004) intensity.
ShrinkageResult shrink_lw_linear(const ReturnsMatrix& r);

/// Rao-Blackwellized Ledoit-Wolf intensity (Chen, Wiesel, Eldar, Hero 2010).
ShrinkageResult shrink_rblw(const ReturnsMatrix& r);

/// Oracle-approximating shrinkage, computed by its fixed-point recursion from rho = 0.
ShrinkageResult shrink_oas(const ReturnsMatrix& r);

/// Closed form the OAS recursion converges to; used to cross-check the iteration.
double oas_closed_form(const MatrixXd& s, Index periods);

/// Sigma = alpha S + beta Sigma0 with the Bodnar-Gupta-Parolya (2014) intensities.
/// An empty target means the identity. The reported intensity is 1 - alpha.
ShrinkageResult shrink_bodnar(const ReturnsMatrix& r, const MatrixXd& target = MatrixXd());

/// Analytical nonlinear shrinkage (Ledoit-Wolf 2020). Needs T >= 12. An isotropic sample
/// covariance is returned unchanged with a "DegenerateSpectrum" warning.
CovarianceEstimate shrink_lw_nonlinear(const ReturnsMatrix& r);

/// Zeroes off-diagonal entries with |s_ij| <= tau.
CovarianceEstimate threshold_hard(const CovarianceEstimate& s, double tau);

/// Off-diagonal z -> sign(z) (|z| - tau)_+.
CovarianceEstimate threshold_soft(const CovarianceEstimate& s, double tau);

/// Soft rule with entry-wise level delta * sqrt(theta_ij log p / T), theta_ij being the
/// variance of the products of centered returns i and j.
CovarianceEstimate threshold_adaptive(const CovarianceEstimate& s, const ReturnsMatrix& r, double delta);

/// Rotationally invariant cleaning of the sample correlation matrix; throws DegenerateSpectrum
/// for a zero-variance asset.
std::pair<CovarianceEstimate, CleanedSpectrum> rie_clean(const ReturnsMatrix& r);

}  // namespace precision_lab
