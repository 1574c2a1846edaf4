#include <doctest.h>

#include <map>
#include <set>
#include <tuple>

#include "rvrecon/error.hpp"
#include "rvrecon/hierarchy.hpp"
#include "test_support.hpp"

using namespace rvrecon;

TEST_CASE("catalog sizes and algebra") {
    const std::map<std::string, std::tuple<int, int, int>> sizes{
        {"ST", {1, 5, 6}},       {"SSV", {1, 2, 3}},     {"STSV", {1, 10, 11}},
        {"SV-T", {3, 10, 13}},   {"T-SV", {6, 10, 16}},  {"CTSV", {8, 10, 18}},
        {"SPV3", {1, 3, 4}},     {"STPV3", {1, 15, 16}}, {"PV3-T", {4, 15, 19}},
        {"T-PV3", {6, 15, 21}},  {"CTPV3", {9, 15, 24}}};
    REQUIRE(catalog_names().size() == 11);
    for (const auto& name : catalog_names()) {
        CAPTURE(name);
        const auto h = build_hierarchy(name);
        const auto [na, nb, n] = sizes.at(name);
        CHECK(static_cast<int>(h.n_upper()) == na);
        CHECK(static_cast<int>(h.n_bottom()) == nb);
        CHECK(static_cast<int>(h.size()) == n);
        const Eigen::MatrixXi s = h.structural_int();
        const Eigen::MatrixXi c = h.constraints_int();
        CHECK((c * s).cwiseAbs().maxCoeff() == 0);
        CHECK(s.bottomRows(nb) == Eigen::MatrixXi::Identity(nb, nb));
        CHECK(s.topRows(na) == h.aggregation);
        CHECK(c.leftCols(na) == Eigen::MatrixXi::Identity(na, na));
        CHECK(c.rightCols(nb) == -h.aggregation);
        // Every bottom feeds the total exactly once.
        CHECK(h.aggregation.row(0).sum() == nb);
        CHECK(h.labels.front() == "RV");
        CHECK(std::set<std::string>(h.labels.begin(), h.labels.end()).size() == h.size());
        CHECK((h.constraints * h.structural).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("labels follow the documented ordering") {
    const auto ctsv = build_hierarchy("CTSV");
    const std::vector<std::string> upper{"RV", "SV-", "SV+", "T1", "T2", "T3", "T4", "T5"};
    CHECK(std::vector<std::string>(ctsv.upper_labels().begin(), ctsv.upper_labels().end()) ==
          upper);
    CHECK(ctsv.labels[8] == "T1SV-");
    CHECK(ctsv.labels[13] == "T1SV+");
    const auto spv3 = build_hierarchy("SPV3");
    CHECK(spv3.labels == std::vector<std::string>{"RV", "PV1", "PV2", "PV3"});
    CHECK(build_hierarchy("PV(3)-T").name == build_hierarchy("PV3-T").name);
}

TEST_CASE("unknown names list the catalog") {
    CHECK_THROWS_WITH_AS(build_hierarchy("XYZ"), doctest::Contains("CTPV3"), ConfigError);
}

TEST_CASE("coherence residual") {
    Rng rng(5);
    for (const auto& name : catalog_names()) {
        const auto h = build_hierarchy(name);
        for (int rep = 0; rep < 100; ++rep) {
            Eigen::VectorXd b(static_cast<Eigen::Index>(h.n_bottom()));
            for (auto& x : b) {
                x = rng.uniform();
            }
            const Eigen::VectorXd y = h.structural * b;
            CHECK(coherence_residual(std::span<const double>(y.data(), y.size()), h) <= 1e-12);
        }
    }
    const auto ssv = build_hierarchy("SSV");
    std::vector<double> y{9.0, 4.0, 5.0};
    CHECK(coherence_residual(y, ssv) == 0.0);
    y[0] += 0.25;
    CHECK(coherence_residual(y, ssv) == 0.25);
    CHECK_THROWS_AS(coherence_residual(std::vector<double>{1.0, 2.0}, ssv), ConfigError);
}

TEST_CASE("assembled node series match rv_core") {
    Rng rng(17);
    IntradayPanel panel("A", 390);
    const auto dates = testing::dates(60);
    for (const auto& d : dates) {
        panel.add_day(d, testing::gaussian_day(rng, 390));
    }
    const auto ssv = node_series_from_panel(panel, build_hierarchy("SSV"));
    const auto tpv = node_series_from_panel(panel, build_hierarchy("T-PV3"));
    const auto rv = ssv.column("RV");
    for (std::size_t t = 0; t < panel.size(); ++t) {
        CHECK(rv[t] == testing::rel(realized_variance(panel[t].returns), 1e-15));
        const auto w = temporal_decomposition(panel[t].returns, 78);
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(tpv.column("T" + std::to_string(k + 1))[t] == testing::rel(w[k], 1e-14));
        }
        const Eigen::VectorXd y = tpv.values.row(static_cast<Eigen::Index>(t)).transpose();
        CHECK(coherence_residual(std::span<const double>(y.data(), y.size()), tpv.hierarchy) <=
              1e-12 * y.cwiseAbs().maxCoeff());
    }

    const auto empty = assemble_node_series({}, build_hierarchy("SSV"));
    CHECK(empty.dates.empty());
    CHECK(empty.values.rows() == 0);
}

TEST_CASE("assemble rejects mislabeled measures") {
    DailyMeasures m;
    m.date = "2010-01-04";
    m.rv = 3.0;
    m.labels = {"SV+", "SV-"};
    m.components = {1.0, 2.0};
    const std::vector<DailyMeasures> ms{m};
    CHECK_THROWS_AS(assemble_node_series(ms, build_hierarchy("SSV")), DataError);
}
