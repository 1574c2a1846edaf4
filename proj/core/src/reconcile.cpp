#include "rvrecon/reconcile.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "rvrecon/error.hpp"
#include "rvrecon/log.hpp"

namespace rvrecon {
namespace {

constexpr double kJitterScale = 1e-10;
constexpr double kMinRcond = 1e-14;

std::string dims(const Eigen::MatrixXd& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_square(const Eigen::MatrixXd& W, Eigen::Index n, const char* what) {
    if (W.rows() != n || W.cols() != n) {
        throw ConfigError(std::string(what) + ": W is " + dims(W) + ", expected " +
                          std::to_string(n) + "x" + std::to_string(n));
    }
    if (!W.allFinite()) {
        throw NumericalError(std::string(what) + ": W has non-finite entries");
    }
}

Eigen::MatrixXd jittered_copy(const Eigen::MatrixXd& W) {
    const double eps = kJitterScale * W.trace() / static_cast<double>(W.rows());
    logger()->warn("covariance near singular, adding diagonal jitter {:.3e}", eps);
    Eigen::MatrixXd out = W;
    out.diagonal().array() += eps;
    return out;
}

bool usable(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return llt.info() == Eigen::Success && llt.rcond() > kMinRcond;
}

struct Factored {
    Eigen::MatrixXd w;  // W actually used, possibly jittered
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool jittered = false;
};

// Cholesky of form(W); retries once with a jittered W.
template <typename Form>
Factored factor_with_jitter(const Eigen::MatrixXd& W, Form form, const char* what) {
    Factored f{W, Eigen::LLT<Eigen::MatrixXd>(form(W)), false};
    if (usable(f.llt)) {
        return f;
    }
    f.w = jittered_copy(W);
    f.jittered = true;
    f.llt.compute(form(f.w));
    if (!usable(f.llt)) {
        const double rc = f.llt.info() == Eigen::Success ? f.llt.rcond() : 0.0;
        throw NumericalError(std::string(what) +
                             " is numerically singular (reciprocal condition " +
                             std::to_string(rc) + ")");
    }
    return f;
}

} // namespace

Eigen::MatrixXd insample_error_matrix(std::span<const ModelFit> fits) {
    if (fits.empty()) {
        throw DataError("no fits supplied for the in-sample error matrix");
    }
    const auto& origins = fits.front().origins;
    Eigen::MatrixXd E(static_cast<Eigen::Index>(origins.size()),
                      static_cast<Eigen::Index>(fits.size()));
    for (std::size_t j = 0; j < fits.size(); ++j) {
        const auto& f = fits[j];
        if (f.horizon != 1) {
            throw DataError("in-sample errors need one-step fits; fit " + std::to_string(j) +
                            " has horizon " + std::to_string(f.horizon));
        }
        if (f.origins != origins ||
            f.residuals.size() != static_cast<Eigen::Index>(origins.size())) {
            throw DataError("fit " + std::to_string(j) + " is not aligned with fit 0");
        }
        E.col(static_cast<Eigen::Index>(j)) = f.residuals;
    }
    return E;
}

CovEstimate shrink_covariance(const Eigen::MatrixXd& E, const ShrinkOptions& options) {
    const auto t = E.rows();
    const auto n = E.cols();
    if (t < 3) {
        throw DataError("shrinkage covariance needs at least 3 rows, got " + std::to_string(t));
    }
    if (n == 0) {
        throw DataError("error matrix has no columns");
    }
    if (!E.allFinite()) {
        throw DataError("error matrix contains non-finite entries");
    }
    const double td = static_cast<double>(t);
    const Eigen::MatrixXd w1 = (E.transpose() * E) / td;
    const Eigen::VectorXd var = w1.diagonal();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(var(j) > 0.0)) {
            const std::string name = static_cast<std::size_t>(j) < options.labels.size()
                                         ? options.labels[static_cast<std::size_t>(j)]
                                         : "column " + std::to_string(j);
            throw DataError("zero-variance in-sample errors for node " + name);
        }
    }

    double lambda = 1.0;
    if (options.forced_lambda) {
        lambda = *options.forced_lambda;
        if (!(lambda >= 0.0 && lambda <= 1.0)) {
            throw ConfigError("forced shrinkage intensity must lie in [0, 1]");
        }
    } else if (n > 1) {
        const Eigen::VectorXd sd = var.cwiseSqrt();
        const Eigen::MatrixXd xs = E * sd.cwiseInverse().asDiagonal();
        const Eigen::MatrixXd cross = xs.transpose() * xs;
        const Eigen::MatrixXd sq = xs.array().square().matrix();
        Eigen::MatrixXd v = (sq.transpose() * sq - cross.array().square().matrix() / td) /
                            (td * (td - 1.0));
        v.diagonal().setZero();
        Eigen::MatrixXd r = cross / td;
        r.diagonal().setZero();
        const double denom = r.array().square().sum();
        if (denom > 0.0) {
            lambda = std::clamp(v.sum() / denom, 0.0, 1.0);
        }
    }

    CovEstimate out;
    out.lambda = lambda;
    out.W = (1.0 - lambda) * w1;
    out.W.diagonal() = var;
    return out;
}

MintProjector::MintProjector(const Eigen::MatrixXd& W, const Eigen::MatrixXd& C) {
    const auto n = C.cols();
    require_square(W, n, "MinT projection");
    const auto f = factor_with_jitter(
        W, [&](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return C * w * C.transpose(); },
        "C W C'");
    jittered_ = f.jittered;
    m_ = Eigen::MatrixXd::Identity(n, n) - f.w * C.transpose() * f.llt.solve(C);
}

Eigen::VectorXd MintProjector::apply(const Eigen::VectorXd& yhat) const {
    if (yhat.size() != m_.cols()) {
        throw ConfigError("forecast vector has " + std::to_string(yhat.size()) +
                          " entries, hierarchy has " + std::to_string(m_.cols()));
    }
    return m_ * yhat;
}

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& W, const Eigen::MatrixXd& C) {
    return MintProjector(W, C).matrix();
}

Eigen::VectorXd mint_reconcile(const Eigen::VectorXd& yhat, const Eigen::MatrixXd& W,
                               const Eigen::MatrixXd& C) {
    return MintProjector(W, C).apply(yhat);
}

Eigen::MatrixXd structural_weights(const Eigen::MatrixXd& W, const Eigen::MatrixXd& S) {
    require_square(W, S.rows(), "structural reconciliation");
    const auto f = factor_with_jitter(
        W, [](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return w; }, "W");
    const Eigen::MatrixXd winv_s = f.llt.solve(S);
    Eigen::LLT<Eigen::MatrixXd> normal(S.transpose() * winv_s);
    if (!usable(normal)) {
        throw NumericalError("S' W^-1 S is numerically singular");
    }
    return normal.solve(winv_s.transpose());
}

Eigen::VectorXd structural_reconcile(const Eigen::VectorXd& yhat, const Eigen::MatrixXd& W,
                                     const Eigen::MatrixXd& S) {
    if (yhat.size() != S.rows()) {
        throw ConfigError("forecast vector has " + std::to_string(yhat.size()) +
                          " entries, hierarchy has " + std::to_string(S.rows()));
    }
    return S * (structural_weights(W, S) * yhat);
}

Eigen::VectorXd bottom_up(const Eigen::VectorXd& bottom, const Eigen::MatrixXd& S) {
    if (bottom.size() != S.cols()) {
        throw ConfigError("bottom vector has " + std::to_string(bottom.size()) +
                          " entries, hierarchy has " + std::to_string(S.cols()) + " bottoms");
    }
    return S * bottom;
}

} // namespace rvrecon
