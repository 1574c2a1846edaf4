#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvrecon/evaluate.hpp"
#include "rvrecon/har.hpp"
#include "rvrecon/hierarchy.hpp"

namespace rvrecon {

/**
 * Forecasting procedures for daily RV.
 *
 * Direct: HAR, SV (SV-HAR), PV3 (PV3-HAR). Bottom-up (_bu) sums node-HAR
 * forecasts of the bottom series; shrinkage (_shr) reconciles all base
 * forecasts of the hierarchy with MinT and a shrinkage covariance. The RV
 * node's base forecast in a _shr hierarchy comes from SV-HAR (sign
 * hierarchies) or PV3-HAR (quantile hierarchies); every other node uses its
 * own HAR.
 */
enum class Procedure { Har, Sv, Pv3, SvBu, Pv3Bu, SvShr, Pv3Shr, TsvBu, TsvShr, Tpv3Bu, Tpv3Shr };

std::string_view procedure_name(Procedure p);
Procedure parse_procedure(std::string_view name);
const std::vector<Procedure>& default_procedures();
bool is_reconciled(Procedure p);
bool is_shrinkage(Procedure p);

struct SubPeriod {
    std::string label;
    std::string first;  // inclusive ISO dates
    std::string last;
};

struct ExperimentConfig {
    std::vector<std::string> assets;
    std::vector<Procedure> procedures = default_procedures();
    std::vector<std::size_t> horizons{1, 5, 22};
    std::size_t window = 1007;
    std::size_t step = 1;
    std::vector<double> alphas{kDefaultAlphas.begin(), kDefaultAlphas.end()};
    /// Hierarchies behind the TSV_* and TPV3_* procedures.
    std::string tsv_hierarchy = "CTSV";
    std::string tpv3_hierarchy = "CTPV3";
    std::vector<LossKind> losses{LossKind::Mse, LossKind::Qlike};
    QlikeMode qlike_mode = QlikeMode::Standard;
    McsOptions mcs{};
    double nemenyi_alpha = 0.05;
    std::uint64_t seed = 20240101;
    std::vector<SubPeriod> sub_periods;
    std::optional<double> forced_lambda;
    double floor_epsilon = 1e-10;
    std::size_t jobs = 1;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
    /// Hierarchy name used by procedure p; empty for direct procedures.
    [[nodiscard]] std::string hierarchy_of(Procedure p) const;
    /// Hierarchies whose node series the configured procedures read
    /// (including SSV/SPV3 for the direct SV and PV3 models), in first-use
    /// order; never empty.
    [[nodiscard]] std::vector<std::string> hierarchies() const;
};

/// Daily node series of one asset, keyed by node label, on shared dates.
struct AssetData {
    std::string asset_id;
    std::vector<std::string> dates;
    SeriesMap series;

    [[nodiscard]] std::size_t size() const noexcept { return dates.size(); }
};

/// Node series of every hierarchy in `names`, merged by label.
AssetData asset_data_from_panel(const IntradayPanel& panel, std::span<const std::string> names,
                                std::span<const double> alphas = kDefaultAlphas);

/// Adds the columns of a node-series set; labels already present are kept.
void merge_node_series(AssetData& data, const NodeSeriesSet& nodes);

struct ForecastRecord {
    std::string asset;
    std::string origin_date;  // first day of the target window
    std::size_t horizon = 1;
    std::string node;
    std::string method;
    double value = 0.0;
};

/**
 * Append-only forecast store keyed by (asset, origin_date, horizon, node,
 * method). Values round-trip exactly through the CSV form.
 */
class ForecastStore {
public:
    /// Throws DataError on a duplicate key.
    void append(ForecastRecord record);
    [[nodiscard]] const std::vector<ForecastRecord>& records() const noexcept { return records_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }

    void write_csv(const std::filesystem::path& path) const;
    static ForecastStore read_csv(const std::filesystem::path& path);

    /**
     * Re-assembles every reconciled row (methods named like X_bu or X_shr)
     * and checks ||C y||_inf <= 1e-8 * max(1, ||y||_inf). Returns the number
     * of rows checked; throws NumericalError naming the first failing row
     * and DataError on an incomplete row.
     */
    std::size_t audit_coherence(const ExperimentConfig& config) const;

private:
    std::vector<ForecastRecord> records_;
    std::set<std::string, std::less<>> keys_;
};

struct LossRecord {
    std::string asset;
    std::string origin_date;
    std::size_t horizon = 1;
    std::string procedure;
    double actual = 0.0;
    double forecast = 0.0;  // floored
    double mse = 0.0;
    double qlike = 0.0;

    [[nodiscard]] double loss(LossKind kind) const { return kind == LossKind::Mse ? mse : qlike; }
};

struct LossTable {
    std::vector<LossRecord> records;

    void write_csv(const std::filesystem::path& path) const;
    static LossTable read_csv(const std::filesystem::path& path);
};

struct RunDiagnostics {
    std::size_t origins = 0;
    std::size_t floored = 0;
    std::size_t jitter_events = 0;
    /// Mean shrinkage intensity per hierarchy.
    std::map<std::string, double> mean_lambda;
};

struct RunResult {
    ForecastStore store;
    LossTable losses;
    RunDiagnostics diagnostics;
};

/// Number of forecast origins for a series of length T: T - W - h + 1
/// origins spaced by `step`, i.e. ceil((T - W - h + 1) / step).
std::size_t origin_count(std::size_t length, std::size_t window, std::size_t horizon,
                         std::size_t step = 1);

/**
 * Fixed-length rolling-window experiment.
 *
 * Origin t (0-based day index) uses days t-W .. t-1 for estimation and is
 * scored against the mean RV over t .. t+h-1; origins run from W to T-h in
 * steps of config.step. Work is spread over config.jobs threads by (asset,
 * origin); results are assembled in a fixed order, so output does not depend
 * on the thread count.
 */
RunResult run_rolling(const ExperimentConfig& config, std::span<const AssetData> data);

struct RatioEntry {
    std::string panel;  // asset id, or "geo_mean"
    LossKind loss = LossKind::Mse;
    std::size_t horizon = 1;
    std::string procedure;
    double mean_loss = 0.0;  // across-asset average in the geo_mean panel
    double ratio = 1.0;
};

struct DmEntry {
    std::string asset;
    LossKind loss = LossKind::Mse;
    std::size_t horizon = 1;
    std::string procedure;
    std::string benchmark;
    DmResult result;
};

struct McsEntry {
    std::string asset;
    LossKind loss = LossKind::Mse;
    std::size_t horizon = 1;
    std::string procedure;
    double p_value = 1.0;
    bool included = true;
};

struct NemenyiEntry {
    LossKind loss = LossKind::Mse;
    std::size_t horizon = 1;
    std::string procedure;
    double mean_rank = 0.0;
    double half_width = 0.0;
};

struct EvaluationReport {
    std::string label;  // "full" or a sub-period label
    std::vector<std::string> procedures;
    std::vector<std::string> assets;
    std::vector<std::size_t> horizons;
    std::vector<LossKind> losses;
    std::vector<RatioEntry> ratios;
    std::vector<DmEntry> dm;
    std::vector<McsEntry> mcs;
    std::vector<NemenyiEntry> nemenyi;
};

/**
 * Loss ratios against HAR per asset and their geometric mean, one-sided DM
 * tests of each procedure against the HAR, SV and PV3 benchmarks present,
 * MCS per asset, and Nemenyi ranks on the pooled (asset, origin) rows.
 * Tests needing more observations than available are skipped with a warning.
 */
EvaluationReport evaluate_losses(const LossTable& table, const ExperimentConfig& config,
                                 std::string label = "full");

/// evaluate_losses on each sub-period (by origin date). Overlapping periods
/// raise ConfigError; periods with no losses are omitted with a warning.
std::vector<EvaluationReport> sub_period_report(const LossTable& table,
                                                std::span<const SubPeriod> periods,
                                                const ExperimentConfig& config);

} // namespace rvrecon
