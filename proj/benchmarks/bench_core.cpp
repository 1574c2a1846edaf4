#include <benchmark/benchmark.h>

#include <vector>

#include "rvrecon/evaluate.hpp"
#include "rvrecon/har.hpp"
#include "rvrecon/hierarchy.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/reconcile.hpp"
#include "rvrecon/rv_core.hpp"
#include "rvrecon/synthetic.hpp"

using namespace rvrecon;

namespace {

std::vector<double> day(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> r(kDefaultGridSize);
    for (auto& x : r) {
        x = 1e-3 * rng.normal();
    }
    return r;
}

Eigen::MatrixXd spd(Eigen::Index n) {
    Rng rng(3);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(i, j) = rng.normal();
        }
    }
    return a * a.transpose() + static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
}

void BM_PartialVariances(benchmark::State& state) {
    const auto r = day(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(partial_variances(r, kDefaultAlphas).data());
    }
}
BENCHMARK(BM_PartialVariances);

void BM_CombinedDecomposition(benchmark::State& state) {
    const auto r = day(2);
    for (auto _ : state) {
        const auto bins = ReturnBinning::day_quantiles(r, kDefaultAlphas);
        benchmark::DoNotOptimize(combined_decomposition(r, bins, 78).values.data());
    }
}
BENCHMARK(BM_CombinedDecomposition);

void BM_MintProjector(benchmark::State& state) {
    const auto h = build_hierarchy(state.range(0) == 0 ? "CTSV" : "CTPV3");
    const auto w = spd(static_cast<Eigen::Index>(h.size()));
    for (auto _ : state) {
        MintProjector p(w, h.constraints);
        benchmark::DoNotOptimize(p.matrix().data());
    }
}
BENCHMARK(BM_MintProjector)->Arg(0)->Arg(1);

void BM_ShrinkCovariance(benchmark::State& state) {
    Rng rng(4);
    Eigen::MatrixXd e(1007, 24);
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.cols(); ++j) {
            e(i, j) = rng.normal();
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(shrink_covariance(e).lambda);
    }
}
BENCHMARK(BM_ShrinkCovariance);

void BM_HarFit(benchmark::State& state) {
    const auto panel = synthetic_panel(5, 1100, "B");
    SeriesMap m;
    std::vector<double> rv;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        rv.push_back(realized_variance(panel[t].returns));
    }
    m.emplace("RV", rv);
    const auto d = build_design(m, HarModel::Har, static_cast<std::size_t>(state.range(0)), "RV",
                                0, 1007);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ols_fit(d).coefficients.data());
    }
}
BENCHMARK(BM_HarFit)->Arg(1)->Arg(22);

void BM_Mcs(benchmark::State& state) {
    Rng rng(6);
    Eigen::MatrixXd l(500, 7);
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        for (Eigen::Index j = 0; j < l.cols(); ++j) {
            l(i, j) = rng.normal() + 0.05 * static_cast<double>(j);
        }
    }
    McsOptions opt;
    opt.n_boot = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(mcs(l, opt).p_values.data());
    }
}
BENCHMARK(BM_Mcs)->Arg(1000)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
