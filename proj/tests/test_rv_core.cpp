#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rvrecon/distributions.hpp"
#include "rvrecon/error.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/rv_core.hpp"
#include "test_support.hpp"

using namespace rvrecon;

namespace {

double plain_sum_sq(const std::vector<double>& r) {
    double s = 0.0;
    for (double x : r) {
        s += x * x;
    }
    return s;
}

double sum(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

// Brute-force partial variances: sort, interpolate, partition by <= / >.
std::vector<double> brute_pv(const std::vector<double>& r, const std::vector<double>& alphas) {
    const double rv = plain_sum_sq(r);
    const double s = std::sqrt(rv / static_cast<double>(r.size()));
    std::vector<double> z(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        z[i] = r[i] / s;
    }
    std::sort(z.begin(), z.end());
    std::vector<double> cut;
    for (double a : alphas) {
        const double pos = a * static_cast<double>(z.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, z.size() - 1);
        cut.push_back(s * (z[lo] + (pos - static_cast<double>(lo)) * (z[hi] - z[lo])));
    }
    std::vector<double> out(alphas.size() + 1, 0.0);
    for (double x : r) {
        std::size_t bin = 0;
        while (bin < cut.size() && x > cut[bin]) {
            ++bin;
        }
        out[bin] += x * x;
    }
    return out;
}

} // namespace

TEST_CASE("log returns") {
    const std::vector<double> p{100.0, 101.0};
    CHECK(log_returns(p)[0] == testing::rel(0.009950330853168083, 1e-14));
    const std::vector<double> flat{50.0, 50.0, 50.0};
    CHECK(log_returns(flat) == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(log_returns(std::vector<double>{1.0, 0.0}), DataError);

    Rng rng(11);
    std::vector<double> prices{100.0};
    for (int i = 0; i < 390; ++i) {
        prices.push_back(prices.back() * std::exp(0.001 * rng.normal()));
    }
    const auto r = log_returns(prices);
    REQUIRE(r.size() == 390);
    const double ratio = std::exp(sum(r));
    CHECK(std::abs(ratio - prices.back() / prices.front()) <= 1e-12 * ratio);
}

TEST_CASE("realized variance and semivariances") {
    const std::vector<double> r{0.01, -0.02, 0.03};
    CHECK(realized_variance(r) == testing::rel(0.0014, 1e-14));
    const auto sv = semivariances(r);
    CHECK(sv.positive == testing::rel(0.0010, 1e-14));
    CHECK(sv.negative == testing::rel(0.0004, 1e-14));
    CHECK(realized_variance(std::vector<double>(5, 0.0)) == 0.0);

    const auto z = semivariances(std::vector<double>{0.0, -0.01});
    CHECK(z.positive == 0.0);
    CHECK(z.negative == testing::rel(1e-4, 1e-14));

    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const auto day = testing::gaussian_day(rng, 390);
        const auto s = semivariances(day);
        const double rv = realized_variance(day);
        CHECK(std::abs(s.positive + s.negative - rv) <= 1e-15 * rv);
    }
}

TEST_CASE("partial variances on the ten-return toy") {
    std::vector<double> r;
    for (int v : {-5, -4, -3, -2, -1, 1, 2, 3, 4, 5}) {
        r.push_back(v * 1e-3);
    }
    const std::vector<double> alphas{0.10, 0.75};
    const auto pv = partial_variances(r, alphas);
    REQUIRE(pv.size() == 3);
    // Cut points -4.1e-3 and 2.75e-3 in return units.
    CHECK(pv[0] == testing::rel(25e-6, 1e-12));
    CHECK(pv[1] == testing::rel(35e-6, 1e-12));
    CHECK(pv[2] == testing::rel(50e-6, 1e-12));
    const auto brute = brute_pv(r, alphas);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(pv[l] == testing::rel(brute[l], 1e-13));
    }
    const auto cuts = partial_variance_thresholds(r, alphas);
    CHECK(cuts[0] == testing::rel(-4.1e-3, 1e-12));
    CHECK(cuts[1] == testing::rel(2.75e-3, 1e-12));
}

TEST_CASE("partial variances: degenerate and random days") {
    Rng rng(5);
    const auto day = testing::gaussian_day(rng, 390);
    const auto one = partial_variances(day, std::vector<double>{});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == testing::rel(realized_variance(day), 1e-15));

    const std::vector<double> alphas{0.10, 0.75};
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = testing::gaussian_day(rng, 390);
        const auto pv = partial_variances(d, alphas);
        const double rv = realized_variance(d);
        CHECK(std::abs(sum(pv) - rv) <= 1e-15 * rv);
        const auto brute = brute_pv(d, alphas);
        for (std::size_t l = 0; l < 3; ++l) {
            CHECK(pv[l] == testing::rel(brute[l], 1e-12));
        }
        // Same thresholds through the generic threshold route.
        const auto cuts = partial_variance_thresholds(d, alphas);
        const auto z = threshold_decomposition(d, cuts);
        for (std::size_t l = 0; l < 3; ++l) {
            CHECK(z[l] == pv[l]);
        }
    }
}

TEST_CASE("threshold decomposition boundaries") {
    const std::vector<double> r{0.0, -0.01, 0.02};
    const auto z = threshold_decomposition(r, std::vector<double>{0.0});
    // r = 0 lands in the lower bin under (c_{l-1}, c_l].
    CHECK(z[0] == testing::rel(1e-4, 1e-14));
    CHECK(z[1] == testing::rel(4e-4, 1e-14));

    const auto low = threshold_decomposition(r, std::vector<double>{-1e9, -1e8});
    CHECK(low[0] == 0.0);
    CHECK(low[1] == 0.0);
    CHECK(low[2] == testing::rel(realized_variance(r), 1e-15));

    // Agrees with the sign split whenever no return is exactly zero.
    Rng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = testing::gaussian_day(rng, 390);
        const auto t = threshold_decomposition(d, std::vector<double>{0.0});
        const auto s = semivariances(d);
        CHECK(t[0] == s.negative);
        CHECK(t[1] == s.positive);
    }
    CHECK_THROWS_AS(threshold_decomposition(r, std::vector<double>{0.1, 0.0}), ConfigError);
}

TEST_CASE("temporal decomposition") {
    const std::vector<double> r(390, 1e-3);
    const auto w = temporal_decomposition(r, 78);
    REQUIRE(w.size() == 5);
    for (double wk : w) {
        CHECK(wk == testing::rel(7.8e-5, 1e-13));
    }
    Rng rng(2);
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = testing::gaussian_day(rng, 390);
        const double rv = realized_variance(d);
        CHECK(std::abs(sum(temporal_decomposition(d, 78)) - rv) <= 1e-15 * rv);
    }
    CHECK_THROWS_AS(temporal_decomposition(r, 77), ConfigError);
}

TEST_CASE("combined grid marginals") {
    Rng rng(21);
    const std::vector<double> alphas{0.10, 0.75};
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = testing::gaussian_day(rng, 390);
        const auto grid = combined_decomposition(d, ReturnBinning::day_quantiles(d, alphas), 78);
        REQUIRE(grid.bins == 3);
        REQUIRE(grid.segments == 5);
        const auto z = partial_variances(d, alphas);
        const auto w = temporal_decomposition(d, 78);
        const auto rows = grid.bin_totals();
        const auto cols = grid.segment_totals();
        for (std::size_t l = 0; l < 3; ++l) {
            CHECK(std::abs(rows[l] - z[l]) <= 1e-14 * z[l]);
        }
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(std::abs(cols[k] - w[k]) <= 1e-14 * w[k]);
        }
        const auto sv = combined_decomposition(d, ReturnBinning::sign_split(), 78);
        CHECK(sv.bins == 2);
        const auto s = semivariances(d);
        CHECK(std::abs(sv.bin_totals()[0] - s.negative) <= 1e-14 * s.negative);
        CHECK(std::abs(sv.bin_totals()[1] - s.positive) <= 1e-14 * s.positive);
    }
}

TEST_CASE("all-zero day decomposes to zeros") {
    const std::vector<double> zero(390, 0.0);
    for (double v : partial_variances(zero, std::vector<double>{0.1, 0.75})) {
        CHECK(v == 0.0);
    }
    for (double v : standardized_returns(zero)) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("periodicity: homoskedastic panel") {
    Rng rng(101);
    IntradayPanel panel("H", 390);
    const auto dates = testing::dates(500);
    for (std::size_t t = 0; t < 500; ++t) {
        std::vector<double> r(390);
        for (auto& x : r) {
            x = rng.normal();
        }
        panel.add_day(dates[t], std::move(r));
    }
    const auto prof = estimate_periodicity(panel);
    double mean_sq = 0.0;
    double worst = 0.0;
    for (double s : prof.sigma) {
        mean_sq += s * s;
        worst = std::max(worst, std::abs(s - 1.0));
    }
    CHECK(testing::within(mean_sq / 390.0, 1.0, 1e-10));
    INFO("largest |sigma_i - 1| = " << worst);
    CHECK(worst <= 0.1);
}

TEST_CASE("periodicity: doubled first slot") {
    Rng rng(102);
    IntradayPanel panel("H", 390);
    const auto dates = testing::dates(500);
    for (std::size_t t = 0; t < 500; ++t) {
        std::vector<double> r(390);
        for (auto& x : r) {
            x = rng.normal();
        }
        r[0] *= 2.0;
        panel.add_day(dates[t], std::move(r));
    }
    const auto prof = estimate_periodicity(panel);
    CHECK(testing::within(prof.sigma[0] / prof.sigma[1], 2.0, 0.15));
}

TEST_CASE("periodicity errors") {
    IntradayPanel small("S", 4);
    const auto dates = testing::dates(60);
    for (std::size_t t = 0; t < 10; ++t) {
        small.add_day(dates[t], {0.1, -0.1, 0.2, 0.0});
    }
    CHECK_THROWS_AS(estimate_periodicity(small), DataError);
    IntradayPanel dead("D", 4);
    for (std::size_t t = 0; t < 60; ++t) {
        dead.add_day(dates[t], {0.1, 0.0, 0.2, -0.1});
    }
    CHECK_THROWS_WITH_AS(estimate_periodicity(dead), doctest::Contains("slot 2"), DataError);
}

TEST_CASE("bipower variation") {
    CHECK(bipower_variation(std::vector<double>(390, 0.0)) == 0.0);
    const double c = 0.003;
    std::vector<double> r(390, c);
    for (std::size_t i = 0; i < r.size(); i += 2) {
        r[i] = -c;
    }
    const double expect = std::acos(-1.0) / 2.0 * 390.0 * c * c;
    CHECK(bipower_variation(r) == testing::rel(expect, 1e-13));

    Rng rng(44);
    double bpv = 0.0;
    double rv = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto d = testing::gaussian_day(rng, 390);
        bpv += bipower_variation(d);
        rv += realized_variance(d);
    }
    CHECK(testing::within(bpv / rv, 1.0, 0.02));
}

TEST_CASE("PV-star thresholds") {
    PeriodicityProfile unit{std::vector<double>(390, 1.0)};
    const auto half = pv_star_thresholds(unit, 390.0, 390, std::vector<double>{0.5});
    CHECK(half.cwiseAbs().maxCoeff() == 0.0);
    const auto t975 = pv_star_thresholds(unit, 390.0, 390, std::vector<double>{0.975});
    CHECK(t975(0, 0) == testing::rel(1.959963984540054, 1e-9));
    CHECK(normal_quantile(0.975) == testing::rel(1.959963984540054, 1e-12));

    PeriodicityProfile prof{std::vector<double>(390)};
    Rng rng(8);
    for (auto& s : prof.sigma) {
        s = 0.5 + rng.uniform();
    }
    const auto cuts = pv_star_thresholds(prof, 2e-4, 390, std::vector<double>{0.1, 0.75});
    const auto cuts4 = pv_star_thresholds(prof, 8e-4, 390, std::vector<double>{0.1, 0.75});
    for (Eigen::Index i = 0; i < cuts.rows(); ++i) {
        CHECK(cuts(i, 0) < cuts(i, 1));
        CHECK(cuts4(i, 0) == testing::rel(2.0 * cuts(i, 0), 1e-13));
    }
    CHECK_THROWS_AS(pv_star_thresholds(unit, 1.0, 390, std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("decompose: every kind adds up to RV and is non-negative") {
    Rng rng(77);
    IntradayPanel panel("P", 390);
    const auto dates = testing::dates(60);
    for (std::size_t t = 0; t < 60; ++t) {
        panel.add_day(dates[t], testing::gaussian_day(rng, 390));
    }
    const auto prof = estimate_periodicity(panel);
    std::vector<DecompositionSpec> specs;
    for (auto kind : {DecompositionKind::Rv, DecompositionKind::Sv, DecompositionKind::Pv,
                      DecompositionKind::Temporal, DecompositionKind::PvStar}) {
        DecompositionSpec s;
        s.kind = kind;
        specs.push_back(s);
    }
    for (auto cross : {DecompositionKind::Sv, DecompositionKind::Pv, DecompositionKind::PvStar}) {
        DecompositionSpec s;
        s.kind = DecompositionKind::Combined;
        s.cross = cross;
        specs.push_back(s);
    }
    DecompositionSpec thr;
    thr.kind = DecompositionKind::Threshold;
    thr.thresholds = {-0.001, 0.0, 0.002};
    specs.push_back(thr);
    for (const auto& spec : specs) {
        const auto labels = component_labels(spec, 390);
        for (const auto& day : panel.days()) {
            const auto m = decompose(day.date, day.returns, spec, &prof);
            REQUIRE(m.components.size() == labels.size());
            CHECK(m.labels == labels);
            for (double c : m.components) {
                CHECK(c >= 0.0);
            }
            CHECK(std::abs(sum(m.components) - m.rv) <= 1e-12 * m.rv);
        }
    }
}
