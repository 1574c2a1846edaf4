#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "rvrecon/error.hpp"
#include "rvrecon/har.hpp"
#include "rvrecon/hierarchy.hpp"
#include "rvrecon/reconcile.hpp"
#include "test_support.hpp"

using namespace rvrecon;

namespace {

Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n) {
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(i, j) = rng.normal();
        }
    }
    return a * a.transpose() + 0.1 * static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (auto& x : v) {
        x = 1.0 + rng.normal();
    }
    return v;
}

// Shrinkage intensity written out term by term: errors scaled by their
// uncentred root mean square, correlation target.
double naive_lambda(const Eigen::MatrixXd& e) {
    const auto t = static_cast<double>(e.rows());
    const Eigen::Index n = e.cols();
    Eigen::MatrixXd xs = e;
    for (Eigen::Index j = 0; j < n; ++j) {
        double ss = 0.0;
        for (Eigen::Index r = 0; r < e.rows(); ++r) {
            ss += e(r, j) * e(r, j);
        }
        const double sd = std::sqrt(ss / t);
        for (Eigen::Index r = 0; r < e.rows(); ++r) {
            xs(r, j) = e(r, j) / sd;
        }
    }
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            double cross = 0.0;
            double sq = 0.0;
            for (Eigen::Index r = 0; r < e.rows(); ++r) {
                const double w = xs(r, i) * xs(r, j);
                cross += w;
                sq += w * w;
            }
            num += (sq - cross * cross / t) / (t * (t - 1.0));
            den += (cross / t) * (cross / t);
        }
    }
    return den == 0.0 ? 1.0 : std::clamp(num / den, 0.0, 1.0);
}

} // namespace

TEST_CASE("hand-checked SSV reconciliation") {
    const auto h = build_hierarchy("SSV");
    const Eigen::Vector3d yhat(10.0, 4.0, 5.0);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::Vector3d expect(29.0 / 3.0, 13.0 / 3.0, 16.0 / 3.0);
    CHECK((mint_reconcile(yhat, w, h.constraints) - expect).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((structural_reconcile(yhat, w, h.structural) - expect).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(bottom_up(Eigen::Vector2d(4.0, 5.0), h.structural) == Eigen::Vector3d(9.0, 4.0, 5.0));
    CHECK(bottom_up(Eigen::Vector2d::Zero(), h.structural).isZero(0.0));
}

TEST_CASE("projection identities on every catalog hierarchy") {
    Rng rng(2024);
    for (const auto& name : catalog_names()) {
        CAPTURE(name);
        const auto h = build_hierarchy(name);
        const auto n = static_cast<Eigen::Index>(h.size());
        const auto nb = static_cast<Eigen::Index>(h.n_bottom());
        for (int rep = 0; rep < 20; ++rep) {
            const auto w = random_spd(rng, n);
            const MintProjector proj(w, h.constraints);
            const auto& m = proj.matrix();
            CHECK((m * h.structural - h.structural).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK((m * m - m).cwiseAbs().maxCoeff() <= 1e-8);
            const auto yhat = random_vector(rng, n);
            const auto once = proj.apply(yhat);
            CHECK((proj.apply(once) - once).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK((h.constraints * once).cwiseAbs().maxCoeff() <= 1e-8);
            const Eigen::VectorXd coherent = h.structural * random_vector(rng, nb);
            CHECK((proj.apply(coherent) - coherent).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(!proj.jittered());
        }
    }
}

TEST_CASE("projection and structural forms agree on CTPV3") {
    Rng rng(77);
    const auto h = build_hierarchy("CTPV3");
    const auto n = static_cast<Eigen::Index>(h.size());
    for (int rep = 0; rep < 200; ++rep) {
        const auto w = random_spd(rng, n);
        const auto yhat = random_vector(rng, n);
        const auto a = mint_reconcile(yhat, w, h.constraints);
        const auto b = structural_reconcile(yhat, w, h.structural);
        const double scale = std::max(1.0, yhat.cwiseAbs().maxCoeff());
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8 * scale);
    }
}

TEST_CASE("structural weights with W = I are the pseudo-inverse") {
    const auto h = build_hierarchy("SPV3");
    const auto g = structural_weights(Eigen::MatrixXd::Identity(4, 4), h.structural);
    const Eigen::MatrixXd sts = h.structural.transpose() * h.structural;
    const Eigen::MatrixXd pinv = sts.ldlt().solve(h.structural.transpose());
    CHECK((g - pinv).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("bottom-up on CTPV3 sums segments and quantile classes") {
    Rng rng(4);
    const auto h = build_hierarchy("CTPV3");
    Eigen::VectorXd b(15);
    for (auto& x : b) {
        x = rng.uniform();
    }
    const auto y = bottom_up(b, h.structural);
    const auto at = [&](const std::string& label) {
        return y(static_cast<Eigen::Index>(h.index_of(label)));
    };
    for (int k = 1; k <= 5; ++k) {
        double s = 0.0;
        for (int l = 1; l <= 3; ++l) {
            s += at("T" + std::to_string(k) + "PV" + std::to_string(l));
        }
        CHECK(at("T" + std::to_string(k)) == testing::rel(s, 1e-15));
    }
    for (int l = 1; l <= 3; ++l) {
        double s = 0.0;
        for (int k = 1; k <= 5; ++k) {
            s += at("T" + std::to_string(k) + "PV" + std::to_string(l));
        }
        CHECK(at("PV" + std::to_string(l)) == testing::rel(s, 1e-15));
    }
    CHECK(at("RV") == testing::rel(b.sum(), 1e-15));
}

TEST_CASE("in-sample error matrix") {
    Rng rng(6);
    std::vector<double> y(200);
    for (auto& x : y) {
        x = 1.0 + rng.uniform();
    }
    SeriesMap m{{"A", y}, {"B", y}};
    auto da = build_design(m, HarModel::NodeHar, 1, "A");

    // Exact targets: zero residuals.
    HarDesign exact = da;
    exact.target = da.regressors * Eigen::Vector4d(0.1, 0.2, 0.3, 0.4);
    const std::vector<ModelFit> perfect{ols_fit(exact), ols_fit(exact)};
    CHECK(insample_error_matrix(perfect).cwiseAbs().maxCoeff() <= 1e-12);

    // Intercept only (other regressors zeroed): residuals are the demeaned target.
    HarDesign flat = da;
    flat.regressors.rightCols(3).setZero();
    const auto fit = ols_fit(flat);
    const std::vector<ModelFit> one{fit};
    const auto e = insample_error_matrix(one);
    const Eigen::VectorXd demeaned = flat.target.array() - flat.target.mean();
    CHECK((e.col(0) - demeaned).cwiseAbs().maxCoeff() <= 1e-12);

    const std::vector<ModelFit> fits{ols_fit(da), ols_fit(build_design(m, HarModel::NodeHar, 1, "B"))};
    const auto e2 = insample_error_matrix(fits);
    CHECK(e2.rows() == da.target.size());
    CHECK(std::abs(e2.col(0).mean()) <= 1e-12);
    CHECK(std::abs(e2.col(1).mean()) <= 1e-12);

    const std::vector<ModelFit> mixed{ols_fit(da), ols_fit(build_design(m, HarModel::NodeHar, 5, "B"))};
    CHECK_THROWS_AS(insample_error_matrix(mixed), DataError);
}

TEST_CASE("shrinkage covariance") {
    Eigen::MatrixXd e(4, 2);
    e << 1, 1, 1, -1, -1, 1, -1, -1;
    auto est = shrink_covariance(e);
    CHECK((est.W - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(est.lambda >= 0.0);
    CHECK(est.lambda <= 1.0);

    Rng rng(9);
    Eigen::MatrixXd x(120, 5);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double common = rng.normal();
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            x(i, j) = common + rng.normal() * (1.0 + 0.2 * static_cast<double>(j));
        }
    }
    est = shrink_covariance(x);
    const Eigen::MatrixXd w1 = x.transpose() * x / static_cast<double>(x.rows());
    CHECK(est.lambda == testing::rel(naive_lambda(x), 1e-12));
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(est.W(i, i) == testing::rel(w1(i, i), 1e-14));
        for (Eigen::Index j = 0; j < 5; ++j) {
            if (i != j) {
                CHECK(est.W(i, j) == testing::rel((1.0 - est.lambda) * w1(i, j), 1e-12));
            }
        }
    }

    ShrinkOptions forced;
    forced.forced_lambda = 1.0;
    est = shrink_covariance(x, forced);
    CHECK(est.lambda == 1.0);
    CHECK((est.W - Eigen::MatrixXd(w1.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd dead = x;
    dead.col(2).setConstant(0.0);
    ShrinkOptions named;
    named.labels = {"a", "b", "c", "d", "e"};
    CHECK_THROWS_WITH_AS(shrink_covariance(dead, named), doctest::Contains("c"), DataError);
    CHECK_THROWS_AS(shrink_covariance(x.topRows(2)), DataError);
}

TEST_CASE("singular and mismatched inputs") {
    const auto h = build_hierarchy("SSV");
    CHECK_THROWS_AS(MintProjector(Eigen::MatrixXd::Zero(3, 3), h.constraints), NumericalError);
    CHECK_THROWS_AS(MintProjector(Eigen::MatrixXd::Identity(4, 4), h.constraints), ConfigError);
    CHECK_THROWS_AS(bottom_up(Eigen::Vector3d::Ones(), h.structural), ConfigError);
}
