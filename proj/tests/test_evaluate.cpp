#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rvrecon/distributions.hpp"
#include "rvrecon/error.hpp"
#include "rvrecon/evaluate.hpp"
#include "test_support.hpp"

using namespace rvrecon;

namespace {

Eigen::MatrixXd normal_losses(Rng& rng, Eigen::Index t, Eigen::Index k) {
    Eigen::MatrixXd m(t, k);
    for (Eigen::Index i = 0; i < t; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

} // namespace

TEST_CASE("QLIKE hand values and asymmetry") {
    CHECK(qlike(2.0, 1.0) == 2.0 - std::log(2.0) - 1.0);
    CHECK(std::abs(qlike(2.0, 1.0) - 0.30685) <= 5e-6);
    CHECK(std::abs(qlike(1.0, 2.0) - 0.19315) <= 5e-6);
    CHECK(qlike(2.0, 1.0) > qlike(1.0, 2.0));
    CHECK(qlike(3.7, 3.7) == 0.0);
    CHECK(squared_error(2.0, 5.0) == 9.0);

    // Ratio-of-logs form: 4/2 - ln4/ln2 - 1 = -1, and it is not zero at truth.
    CHECK(qlike(4.0, 2.0, QlikeMode::Literal) == testing::rel(-1.0, 1e-15));
    CHECK(qlike(std::exp(1.0), std::exp(2.0), QlikeMode::Literal) ==
          testing::rel(std::exp(-1.0) - 0.5 - 1.0, 1e-15));
    CHECK(qlike(3.0, 3.0, QlikeMode::Literal) == testing::rel(-1.0, 1e-15));
    CHECK(parse_qlike_mode("literal") == QlikeMode::Literal);
    CHECK_THROWS_AS(parse_qlike_mode("patton"), ConfigError);
}

TEST_CASE("QLIKE properties") {
    Rng rng(8);
    for (int rep = 0; rep < 100; ++rep) {
        const double y = std::exp(4.0 * rng.normal());
        CHECK(qlike(y, y / 2.0) > qlike(y, 2.0 * y));
        CHECK(qlike(y, y) == 0.0);
        // Convex in u = 1/f: positive second differences.
        const double u = 1.0 / y;
        for (double c = 0.3; c < 3.0; c += 0.3) {
            const double a = qlike(y, 1.0 / ((c - 0.05) * u));
            const double b = qlike(y, 1.0 / (c * u));
            const double d = qlike(y, 1.0 / ((c + 0.05) * u));
            CHECK(a + d - 2.0 * b > 0.0);
        }
    }
}

TEST_CASE("loss series checks") {
    const std::vector<double> y{1.0, 2.0, 3.0};
    CHECK(loss_series(y, y, LossKind::Qlike) == std::vector<double>(3, 0.0));
    CHECK(loss_series(y, std::vector<double>{2.0, 2.0, 2.0}, LossKind::Mse) ==
          std::vector<double>{1.0, 0.0, 1.0});
    CHECK_THROWS_AS(loss_series(y, std::vector<double>{1.0, 0.0, 1.0}, LossKind::Qlike),
                    DataError);
    CHECK_THROWS_AS(loss_series(std::vector<double>{1.0, -1.0, 1.0}, y, LossKind::Qlike),
                    DataError);
    CHECK_THROWS_AS(loss_series(y, std::vector<double>{1.0}, LossKind::Mse), ConfigError);
    CHECK_THROWS_AS(loss_series(std::vector<double>{2.0}, std::vector<double>{1.0},
                                LossKind::Qlike, QlikeMode::Literal),
                    NumericalError);
    CHECK(parse_loss_kind("QLIKE") == LossKind::Qlike);
    CHECK(loss_kind_name(LossKind::Mse) == "MSE");
}

TEST_CASE("loss ratios") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    CHECK(loss_ratio(a, a) == 1.0);
    CHECK(loss_ratio(1.0, 4.0) == 0.25);
    CHECK(geo_mean_ratio(std::vector<double>{0.5, 2.0}) == testing::rel(1.0, 1e-15));
    // 0.8962 is quoted to four decimals (truncated): within one unit of the last digit.
    CHECK(std::abs(geo_mean_ratio(std::vector<double>{0.8, 0.9, 1.0}) - 0.8962) <= 1e-4);
    CHECK(geo_mean_ratio(std::vector<double>{0.8, 0.9, 1.0}) ==
          testing::rel(std::cbrt(0.72), 1e-14));
    CHECK_THROWS_AS(loss_ratio(1.0, 0.0), DataError);
    CHECK_THROWS_AS(geo_mean_ratio(std::vector<double>{1.0, 0.0}), DataError);
    CHECK_THROWS_AS(geo_mean_ratio(std::vector<double>{}), DataError);
}

TEST_CASE("Diebold-Mariano") {
    Rng rng(3);
    std::vector<double> a(300);
    for (auto& x : a) {
        x = 1.0 + rng.uniform();
    }
    const auto same = dm_test(a, a, 1);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 0.5);

    std::vector<double> b(a);
    for (auto& x : b) {
        x += 1.0;
    }
    const auto shifted = dm_test(a, b, 1);
    CHECK(shifted.p_value == 0.0);
    CHECK(shifted.statistic < 0.0);

    std::vector<double> noisy(a.size());
    for (auto& x : noisy) {
        x = 1.5 + rng.uniform();
    }
    for (std::size_t h : {1U, 5U, 22U}) {
        const auto ab = dm_test(a, noisy, h);
        const auto ba = dm_test(noisy, a, h);
        CHECK(ab.statistic == -ba.statistic);
        CHECK(std::abs(ab.p_value + ba.p_value - 1.0) <= 1e-15);
        CHECK(ab.p_value < 0.01);
    }
    CHECK_THROWS_AS(dm_test(std::vector<double>(10, 1.0), std::vector<double>(10, 1.0), 1),
                    DataError);
    CHECK_THROWS_AS(dm_test(a, std::vector<double>(a.size() - 1, 1.0), 1), ConfigError);
}

TEST_CASE("DM statistic against a hand HAC computation") {
    Rng rng(44);
    std::vector<double> a(200);
    std::vector<double> b(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal() + 0.1;
    }
    const std::size_t h = 5;
    const double n = 200.0;
    std::vector<double> d(a.size());
    double dbar = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a[i] - b[i];
        dbar += d[i] / n;
    }
    double lrv = 0.0;
    for (std::size_t lag = 0; lag < h; ++lag) {
        double g = 0.0;
        for (std::size_t i = lag; i < d.size(); ++i) {
            g += (d[i] - dbar) * (d[i - lag] - dbar);
        }
        g /= n;
        const double w = lag == 0 ? 1.0 : 2.0 * (1.0 - static_cast<double>(lag) / h);
        lrv += w * g;
    }
    const double stat = dbar / std::sqrt(lrv / n);
    const auto res = dm_test(a, b, h);
    CHECK(res.statistic == testing::rel(stat, 1e-12));
    CHECK(res.p_value == testing::rel(normal_cdf(stat), 1e-12));
}

TEST_CASE("stationary bootstrap") {
    const auto iid = stationary_bootstrap_indices(100000, 1.0, 5);
    std::size_t restarts = 0;
    for (std::size_t i = 1; i < iid.size(); ++i) {
        restarts += iid[i] != (iid[i - 1] + 1) % 100000 ? 1 : 0;
    }
    CHECK(static_cast<double>(restarts) / 99999.0 >= 0.999);

    // Mean block length from the continuation rate over 1e4 resamples of 1000.
    std::size_t transitions = 0;
    restarts = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto idx = stationary_bootstrap_indices(1000, 22.0, derive_seed(99, s));
        REQUIRE(idx.size() == 1000);
        for (std::size_t i = 1; i < idx.size(); ++i) {
            restarts += idx[i] != (idx[i - 1] + 1) % 1000 ? 1 : 0;
        }
        transitions += idx.size() - 1;
    }
    const double mean_block = static_cast<double>(transitions) / static_cast<double>(restarts);
    CHECK(std::abs(mean_block - 22.0) <= 1.0);

    CHECK(stationary_bootstrap_indices(500, 22.0, 7) == stationary_bootstrap_indices(500, 22.0, 7));
    CHECK(stationary_bootstrap_indices(500, 22.0, 7) != stationary_bootstrap_indices(500, 22.0, 8));
    const auto wrap = stationary_bootstrap_indices(50, 1e9, 1);
    for (std::size_t i = 1; i < wrap.size(); ++i) {
        CHECK(wrap[i] == (wrap[i - 1] + 1) % 50);
    }
    CHECK_THROWS_AS(stationary_bootstrap_indices(0, 22.0, 1), ConfigError);
    CHECK_THROWS_AS(stationary_bootstrap_indices(10, 0.5, 1), ConfigError);
}

TEST_CASE("MCS with identical columns keeps everything") {
    Rng rng(1);
    Eigen::MatrixXd base = normal_losses(rng, 200, 1);
    Eigen::MatrixXd same(200, 4);
    for (Eigen::Index j = 0; j < 4; ++j) {
        same.col(j) = base.col(0);
    }
    McsOptions opt;
    opt.n_boot = 500;
    const auto res = mcs(same, opt);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(res.p_values[j] == 1.0);
        CHECK(res.included[j]);
    }
}

TEST_CASE("MCS properties") {
    Rng rng(2);
    Eigen::MatrixXd l = normal_losses(rng, 300, 5);
    l.col(3).array() += 1.0;
    l.col(4).array() += 0.15;
    McsOptions opt;
    opt.n_boot = 1000;
    opt.seed = 17;
    for (auto stat : {McsStatistic::Range, McsStatistic::Max}) {
        opt.statistic = stat;
        const auto res = mcs(l, opt);
        REQUIRE(res.elimination_order.size() == 5);
        double prev = 0.0;
        for (auto j : res.elimination_order) {
            CHECK(res.p_values[j] >= prev);
            prev = res.p_values[j];
        }
        CHECK(res.p_values[res.elimination_order.back()] == 1.0);
        CHECK(!res.included[3]);
        CHECK(res.p_values[3] < 0.01);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(res.included[j] == (res.p_values[j] >= opt.alpha));
        }
        // Larger alpha keeps a subset.
        McsOptions wide = opt;
        wide.alpha = 0.5;
        const auto narrow = mcs(l, wide);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK((!narrow.included[j] || res.included[j]));
        }
        // Same seed, same answer.
        const auto again = mcs(l, opt);
        CHECK(again.p_values == res.p_values);
        opt.jobs = 3;
        CHECK(mcs(l, opt).p_values == res.p_values);
        opt.jobs = 1;
    }

    CHECK_THROWS_AS(mcs(l.leftCols(1), opt), ConfigError);
    CHECK_THROWS_AS(mcs(l.topRows(49), opt), DataError);
    McsOptions few = opt;
    few.n_boot = 99;
    CHECK_THROWS_AS(mcs(l, few), ConfigError);
    CHECK(parse_mcs_statistic("max") == McsStatistic::Max);
    CHECK_THROWS_AS(parse_mcs_statistic("median"), ConfigError);
}

TEST_CASE("Nemenyi ranks") {
    Eigen::MatrixXd same = Eigen::MatrixXd::Ones(20, 4);
    auto res = mcb_nemenyi(same);
    for (double r : res.mean_ranks) {
        CHECK(r == 2.5);
    }

    Rng rng(6);
    Eigen::MatrixXd l = normal_losses(rng, 100, 4);
    l.col(2).array() = l.rowwise().minCoeff().transpose().array() - 1.0;
    res = mcb_nemenyi(l);
    CHECK(res.mean_ranks[2] == 1.0);
    double total = 0.0;
    for (double r : res.mean_ranks) {
        total += r;
    }
    CHECK(total == testing::rel(10.0, 1e-14));

    // Ranks are invariant to a strictly increasing map applied per day.
    Eigen::MatrixXd mapped = l;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double s = 1.0 + static_cast<double>(i);
        for (Eigen::Index j = 0; j < l.cols(); ++j) {
            mapped(i, j) = s * std::exp(l(i, j)) + std::cbrt(static_cast<double>(i));
        }
    }
    CHECK(mcb_nemenyi(mapped).mean_ranks == res.mean_ranks);

    // q is half the studentized range quantile: 3.314 / 2 for k = 4 at 5%.
    const double q = studentized_range_quantile(0.95, 4);
    CHECK(res.critical_value == testing::rel(0.5 * q, 1e-14));
    CHECK(res.half_width == testing::rel(0.5 * q * std::sqrt(4.0 * 5.0 / (12.0 * 100.0)), 1e-14));

    CHECK_THROWS_AS(mcb_nemenyi(l.topRows(9)), DataError);
    CHECK_THROWS_AS(mcb_nemenyi(l.leftCols(1)), ConfigError);
}

TEST_CASE("studentized range quantiles") {
    // k = 2 has a closed form: sqrt(2) * z_{(1+p)/2}.
    for (double p : {0.90, 0.95, 0.99}) {
        CHECK(studentized_range_quantile(p, 2) ==
              testing::rel(std::sqrt(2.0) * normal_quantile(0.5 * (1.0 + p)), 1e-6));
    }
    // Published infinite-df table values (three decimals).
    struct Row {
        std::size_t k;
        double p;
        double q;
    };
    for (const auto& r : {Row{3, 0.95, 3.314}, Row{4, 0.95, 3.633}, Row{5, 0.95, 3.858},
                          Row{10, 0.95, 4.474}, Row{20, 0.95, 5.012}, Row{3, 0.90, 2.902},
                          Row{10, 0.90, 4.129}}) {
        CAPTURE(r.k);
        CAPTURE(r.p);
        CHECK(std::abs(studentized_range_quantile(r.p, r.k) - r.q) <= 1e-3);
        CHECK(std::abs(studentized_range_cdf(r.q, r.k) - r.p) <= 2e-3);
    }
}

TEST_CASE("normal distribution helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_quantile(0.975) == testing::rel(1.959963984540054, 1e-12));
    CHECK(normal_cdf(normal_quantile(0.3)) == testing::rel(0.3, 1e-12));
}
