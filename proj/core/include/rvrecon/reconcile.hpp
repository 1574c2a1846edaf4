#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rvrecon/har.hpp"

namespace rvrecon {

/// E(t, j) = residual of node j's one-step fit at origin t. All fits must
/// be one-step fits over the same origins; otherwise DataError.
Eigen::MatrixXd insample_error_matrix(std::span<const ModelFit> fits);

struct CovEstimate {
    Eigen::MatrixXd W;
    double lambda = 0.0;
};

struct ShrinkOptions {
    /// Skip the estimator and use this intensity (must lie in [0, 1]).
    std::optional<double> forced_lambda;
    /// Node names for diagnostics; may be empty.
    std::vector<std::string> labels;
};

/**
 * W = lambda * diag(W1) + (1 - lambda) * W1 with W1 = E'E / T (uncentered).
 *
 * lambda is the correlation-target intensity
 *   sum_{i != j} Var(r_ij) / sum_{i != j} r_ij^2
 * where the r_ij are correlations implied by W1 and Var(r_ij) is estimated
 * from the standardized error cross-products, clipped to [0, 1]. When every
 * off-diagonal correlation is exactly zero lambda is set to 1.
 *
 * Requires at least 3 rows; a zero-variance column raises DataError.
 */
CovEstimate shrink_covariance(const Eigen::MatrixXd& E, const ShrinkOptions& options = {});

/**
 * Projection onto the coherent subspace, M = I - W C' (C W C')^{-1} C.
 *
 * C W C' is factorized (Cholesky) rather than inverted. If the factorization
 * fails or is numerically singular, a diagonal jitter 1e-10 * tr(W)/n is
 * added to W once (logged); a second failure raises NumericalError with the
 * reciprocal condition estimate.
 */
class MintProjector {
public:
    MintProjector(const Eigen::MatrixXd& W, const Eigen::MatrixXd& C);

    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& yhat) const;
    [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return m_; }
    [[nodiscard]] bool jittered() const noexcept { return jittered_; }

private:
    Eigen::MatrixXd m_;
    bool jittered_ = false;
};

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& W, const Eigen::MatrixXd& C);

Eigen::VectorXd mint_reconcile(const Eigen::VectorXd& yhat, const Eigen::MatrixXd& W,
                               const Eigen::MatrixXd& C);

/// G = (S' W^{-1} S)^{-1} S' W^{-1}, solved through Cholesky factors.
Eigen::MatrixXd structural_weights(const Eigen::MatrixXd& W, const Eigen::MatrixXd& S);

/// y~ = S G yhat.
Eigen::VectorXd structural_reconcile(const Eigen::VectorXd& yhat, const Eigen::MatrixXd& W,
                                     const Eigen::MatrixXd& S);

/// y~ = S b.
Eigen::VectorXd bottom_up(const Eigen::VectorXd& bottom, const Eigen::MatrixXd& S);

} // namespace rvrecon
