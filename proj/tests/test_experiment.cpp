#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "rvrecon/error.hpp"
#include "rvrecon/experiment.hpp"
#include "rvrecon/io.hpp"
#include "rvrecon/report.hpp"
#include "rvrecon/synthetic.hpp"
#include "test_support.hpp"

using namespace rvrecon;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.assets = {"A", "B"};
    c.window = 120;
    c.horizons = {1, 5};
    c.step = 4;
    c.mcs.n_boot = 200;
    c.mcs.seed = 5;
    return c;
}

std::vector<AssetData> small_data(const ExperimentConfig& c, std::size_t days) {
    std::vector<AssetData> out;
    for (std::size_t i = 0; i < c.assets.size(); ++i) {
        const auto panel = synthetic_asset_panel(c.seed, i, days, c.assets[i]);
        out.push_back(asset_data_from_panel(panel, c.hierarchies(), c.alphas));
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("rvrecon_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double lag1_acf(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) {
        m += v;
    }
    m /= static_cast<double>(x.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        den += (x[t] - m) * (x[t] - m);
        if (t > 0) {
            num += (x[t] - m) * (x[t - 1] - m);
        }
    }
    return num / den;
}

} // namespace

TEST_CASE("origin arithmetic") {
    CHECK(origin_count(1200, 1007, 1) == 193);
    CHECK(origin_count(1200, 1007, 5) == 189);
    CHECK(origin_count(1200, 1007, 22) == 172);
    CHECK(origin_count(1200, 1007, 1, 10) == 20);
    CHECK(origin_count(1000, 1007, 1) == 0);
}

TEST_CASE("procedure catalog and config validation") {
    CHECK(default_procedures().size() == 7);
    for (auto p : default_procedures()) {
        CHECK(parse_procedure(procedure_name(p)) == p);
    }
    CHECK(is_reconciled(Procedure::TsvBu));
    CHECK(!is_reconciled(Procedure::Pv3));
    CHECK(is_shrinkage(Procedure::Pv3Shr));
    CHECK_THROWS_AS(parse_procedure("ARIMA"), ConfigError);

    ExperimentConfig c;
    c.assets = {"A"};
    CHECK_NOTHROW(c.validate());
    CHECK(c.hierarchy_of(Procedure::SvShr) == "SSV");
    CHECK(c.hierarchy_of(Procedure::Tpv3Bu) == "CTPV3");
    CHECK(c.hierarchy_of(Procedure::Har).empty());
    auto bad = c;
    bad.window = 40;  // needs 23 + 22
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.horizons = {0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.tsv_hierarchy = "CTPV3";
    bad.procedures = {Procedure::TsvBu};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("rolling run: alignment, identities and determinism") {
    auto c = small_config();
    const std::size_t days = 200;
    const auto data = small_data(c, days);
    const auto run = run_rolling(c, data);

    // Every procedure is present at every origin of every asset and horizon.
    std::map<std::tuple<std::string, std::size_t, std::string>, std::size_t> count;
    for (const auto& r : run.losses.records) {
        ++count[{r.asset, r.horizon, r.procedure}];
    }
    for (const auto& a : c.assets) {
        for (auto h : c.horizons) {
            for (auto p : c.procedures) {
                CHECK(count[{a, h, std::string(procedure_name(p))}] ==
                      origin_count(days, c.window, h, c.step));
            }
        }
    }

    // Targets are the mean RV over t .. t+h-1 for origin date t.
    const auto& rv = data[0].series.at("RV");
    for (const auto& r : run.losses.records) {
        if (r.asset != "A") {
            continue;
        }
        const auto t = static_cast<std::size_t>(
            std::find(data[0].dates.begin(), data[0].dates.end(), r.origin_date) -
            data[0].dates.begin());
        REQUIRE(t >= c.window);
        REQUIRE(t + r.horizon <= days);
        double target = 0.0;
        for (std::size_t j = t; j < t + r.horizon; ++j) {
            target += rv[j];
        }
        CHECK(r.actual == testing::rel(target / static_cast<double>(r.horizon), 1e-14));
        CHECK(r.forecast >= c.floor_epsilon);
    }

    // Bottom-up rows add up exactly.
    std::map<std::tuple<std::string, std::string, std::size_t, std::string>, double> v;
    for (const auto& r : run.store.records()) {
        v[{r.asset, r.origin_date, r.horizon, r.node + "|" + r.method}] = r.value;
    }
    std::size_t checked = 0;
    for (const auto& r : run.store.records()) {
        if (r.method == "SV_bu" && r.node == "RV") {
            const double up = v.at({r.asset, r.origin_date, r.horizon, "SV+|SV_bu"});
            const double down = v.at({r.asset, r.origin_date, r.horizon, "SV-|SV_bu"});
            CHECK(r.value == down + up);
            ++checked;
        }
    }
    CHECK(checked == c.assets.size() * (origin_count(days, c.window, 1, c.step) +
                                        origin_count(days, c.window, 5, c.step)));
    CHECK(run.store.audit_coherence(c) > 0);

    // Same seed, different worker count: identical files.
    const auto dir = scratch("determinism");
    run.store.write_csv(dir / "f1.csv");
    run.losses.write_csv(dir / "l1.csv");
    c.jobs = 3;
    const auto again = run_rolling(c, data);
    again.store.write_csv(dir / "f2.csv");
    again.losses.write_csv(dir / "l2.csv");
    CHECK(slurp(dir / "f1.csv") == slurp(dir / "f2.csv"));
    CHECK(slurp(dir / "l1.csv") == slurp(dir / "l2.csv"));

    // Store and loss round-trip exactly.
    const auto back = ForecastStore::read_csv(dir / "f1.csv");
    REQUIRE(back.size() == run.store.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.records()[i].value == run.store.records()[i].value);
    }
    CHECK(back.audit_coherence(c) == run.store.audit_coherence(c));
    const auto lback = LossTable::read_csv(dir / "l1.csv");
    REQUIRE(lback.records.size() == run.losses.records.size());
    CHECK(lback.records.back().qlike == run.losses.records.back().qlike);
    fs::remove_all(dir);
}

TEST_CASE("forecast store keys and coherence audit") {
    ForecastStore s;
    s.append({"A", "2010-01-04", 1, "RV", "SV_bu", 3.0});
    CHECK_THROWS_AS(s.append({"A", "2010-01-04", 1, "RV", "SV_bu", 4.0}), DataError);
    s.append({"A", "2010-01-04", 1, "SV-", "SV_bu", 1.0});
    ExperimentConfig c;
    c.assets = {"A"};
    CHECK_THROWS_AS(s.audit_coherence(c), DataError);  // SV+ missing
    s.append({"A", "2010-01-04", 1, "SV+", "SV_bu", 2.5});
    CHECK_THROWS_AS(s.audit_coherence(c), NumericalError);

    ForecastStore ok;
    ok.append({"A", "2010-01-04", 1, "RV", "SV_shr", 3.0});
    ok.append({"A", "2010-01-04", 1, "SV-", "SV_shr", 1.0});
    ok.append({"A", "2010-01-04", 1, "SV+", "SV_shr", 2.0});
    ok.append({"A", "2010-01-04", 1, "RV", "HAR", 7.0});
    CHECK(ok.audit_coherence(c) == 1);
}

TEST_CASE("synthetic generators") {
    const auto a = synthetic_panel(11, 500, "X");
    const auto b = synthetic_panel(11, 500, "X");
    REQUIRE(a.size() == 500);
    std::vector<double> rv;
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].returns == b[t].returns);
        rv.push_back(realized_variance(a[t].returns));
    }
    CHECK(lag1_acf(rv) > 0.3);

    for (const auto& name : catalog_names()) {
        const auto h = build_hierarchy(name);
        const auto nodes = synthetic_node_series(3, 300, h);
        for (Eigen::Index t = 0; t < nodes.values.rows(); ++t) {
            const Eigen::VectorXd y = nodes.values.row(t).transpose();
            CHECK(coherence_residual(std::span<const double>(y.data(), y.size()), h) <=
                  1e-12 * y.cwiseAbs().maxCoeff());
            CHECK(y.minCoeff() > 0.0);
        }
    }
    const auto prof = u_shaped_profile(390, 1.5);
    double ms = 0.0;
    for (double x : prof) {
        ms += x * x;
    }
    CHECK(ms / 390.0 == testing::rel(1.0, 1e-12));
    CHECK(prof.front() > prof[195]);
}

TEST_CASE("evaluation and sub-periods") {
    auto c = small_config();
    const auto data = small_data(c, 200);
    const auto run = run_rolling(c, data);
    const auto full = evaluate_losses(run.losses, c);
    CHECK(full.label == "full");

    // HAR against itself is 1 in every panel.
    for (const auto& r : full.ratios) {
        if (r.procedure == "HAR") {
            CHECK(r.ratio == 1.0);
        }
    }
    const auto table = format_ratio_table(full);
    for (auto p : c.procedures) {
        CHECK(table.find(std::string(procedure_name(p))) != std::string::npos);
    }
    CHECK(table.find("geometric mean across assets") != std::string::npos);

    // A single period covering everything reproduces the full report.
    const std::vector<SubPeriod> all{{"all", "1900-01-01", "2100-12-31"}};
    const auto subs = sub_period_report(run.losses, all, c);
    REQUIRE(subs.size() == 1);
    std::ostringstream x;
    std::ostringstream y;
    write_ratio_csv(full, x);
    write_ratio_csv(subs[0], y);
    CHECK(x.str() == y.str());
    REQUIRE(subs[0].mcs.size() == full.mcs.size());
    for (std::size_t i = 0; i < full.mcs.size(); ++i) {
        CHECK(subs[0].mcs[i].p_value == full.mcs[i].p_value);
    }

    const std::vector<SubPeriod> overlap{{"a", "2003-01-01", "2003-12-31"},
                                         {"b", "2003-06-01", "2004-12-31"}};
    CHECK_THROWS_AS(sub_period_report(run.losses, overlap, c), ConfigError);
    const std::vector<SubPeriod> with_empty{{"past", "1900-01-01", "1900-12-31"},
                                            {"all", "1901-01-01", "2100-12-31"}};
    const auto kept = sub_period_report(run.losses, with_empty, c);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].label == "all");
}

TEST_CASE("sub-period halves of iid losses agree within noise") {
    Rng rng(21);
    ExperimentConfig c;
    c.assets = {"A"};
    c.procedures = {Procedure::Har, Procedure::Sv};
    c.horizons = {1};
    c.mcs.n_boot = 200;
    LossTable t;
    const auto dates = business_dates("2010-01-04", 2000);
    for (std::size_t i = 0; i < dates.size(); ++i) {
        for (const char* p : {"HAR", "SV"}) {
            LossRecord r;
            r.asset = "A";
            r.origin_date = dates[i];
            r.procedure = p;
            r.actual = 1.0;
            r.forecast = 1.0;
            r.mse = std::exp(rng.normal());
            r.qlike = std::exp(rng.normal());
            t.records.push_back(r);
        }
    }
    const std::vector<SubPeriod> halves{{"h1", dates.front(), dates[999]},
                                        {"h2", dates[1000], dates.back()}};
    const auto rep = sub_period_report(t, halves, c);
    REQUIRE(rep.size() == 2);
    const auto sv_ratio = [](const EvaluationReport& e, LossKind k) {
        for (const auto& r : e.ratios) {
            if (r.procedure == "SV" && r.loss == k && r.panel == "A") {
                return r.ratio;
            }
        }
        return -1.0;
    };
    // Each ratio of two means of 1000 lognormals has sd near 0.06; the difference
    // near 0.08, so 0.3 is beyond 3.5 sd.
    for (auto k : {LossKind::Mse, LossKind::Qlike}) {
        CHECK(std::abs(sv_ratio(rep[0], k) - sv_ratio(rep[1], k)) <= 0.3);
    }
}
