#include "rvrecon/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <utility>

#include "rvrecon/error.hpp"
#include "rvrecon/log.hpp"
#include "rvrecon/reconcile.hpp"
#include "rvrecon/text.hpp"

namespace rvrecon {
namespace {

struct ProcedureInfo {
    Procedure id;
    std::string_view name;
};

constexpr std::array<ProcedureInfo, 11> kProcedures{{
    {Procedure::Har, "HAR"},
    {Procedure::Sv, "SV"},
    {Procedure::Pv3, "PV3"},
    {Procedure::SvBu, "SV_bu"},
    {Procedure::Pv3Bu, "PV3_bu"},
    {Procedure::SvShr, "SV_shr"},
    {Procedure::Pv3Shr, "PV3_shr"},
    {Procedure::TsvBu, "TSV_bu"},
    {Procedure::TsvShr, "TSV_shr"},
    {Procedure::Tpv3Bu, "TPV3_bu"},
    {Procedure::Tpv3Shr, "TPV3_shr"},
}};

bool sign_family(Procedure p) {
    return p == Procedure::Sv || p == Procedure::SvBu || p == Procedure::SvShr ||
           p == Procedure::TsvBu || p == Procedure::TsvShr;
}

bool temporal_sign(std::string_view name) {
    return name == "STSV" || name == "SV-T" || name == "T-SV" || name == "CTSV";
}

bool temporal_quantile(std::string_view name) {
    return name == "STPV3" || name == "PV3-T" || name == "T-PV3" || name == "CTPV3";
}

std::string store_key(const ForecastRecord& r) {
    return r.asset + '\x1f' + r.origin_date + '\x1f' + std::to_string(r.horizon) + '\x1f' +
           r.node + '\x1f' + r.method;
}

void require_plain(std::string_view field, std::string_view what) {
    if (field.empty() || field.find_first_of(",\n\r") != std::string_view::npos) {
        throw DataError(std::string(what) + " '" + std::string(field) +
                        "' is empty or contains a separator");
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    return in;
}

// ---------------------------------------------------------------- rolling run

struct TaskOutput {
    std::vector<ForecastRecord> records;
    // (horizon, procedure) -> unfloored RV forecast and realized target
    std::vector<std::tuple<std::size_t, Procedure, double, double>> scored;
    std::map<std::string, double> lambdas;
    std::size_t jitters = 0;
};

class OriginTask {
public:
    OriginTask(const ExperimentConfig& config,
               const std::map<std::string, HierarchyStructure>& hierarchies,
               const AssetData& data, std::size_t origin)
        : config_(config), hierarchies_(hierarchies), data_(data), origin_(origin) {}

    TaskOutput run() {
        TaskOutput out;
        const auto& rv = data_.series.find("RV")->second;
        for (const auto h : config_.horizons) {
            if (origin_ + h > data_.size()) {
                continue;
            }
            double target = 0.0;
            for (std::size_t j = origin_; j < origin_ + h; ++j) {
                target += rv[j];
            }
            target /= static_cast<double>(h);
            for (const auto p : config_.procedures) {
                const double value = forecast_procedure(p, h, out);
                out.scored.emplace_back(h, p, value, target);
            }
        }
        for (auto& [name, proj] : projectors_) {
            out.lambdas[name] = proj.lambda;
            out.jitters += proj.projector.jittered() ? 1 : 0;
        }
        return out;
    }

private:
    struct Shrunk {
        MintProjector projector;
        double lambda;
    };

    double fitted_forecast(HarModel model, const std::string& node, std::size_t h) {
        const auto key = std::make_tuple(model, node, h);
        if (const auto it = forecasts_.find(key); it != forecasts_.end()) {
            return it->second;
        }
        const auto design =
            build_design(data_.series, model, h, node, origin_ - config_.window, config_.window);
        auto fit = ols_fit(design, model, FitOptions{false});
        const double value = forecast(fit, design.latest);
        forecasts_.emplace(key, value);
        if (h == 1) {
            fits_.emplace(std::make_tuple(model, node), std::move(fit));
        }
        return value;
    }

    const ModelFit& one_step_fit(HarModel model, const std::string& node) {
        fitted_forecast(model, node, 1);
        return fits_.at(std::make_tuple(model, node));
    }

    static HarModel node_model(const HierarchyStructure& hs, std::size_t j, HarModel top) {
        return hs.labels[j] == "RV" ? top : HarModel::NodeHar;
    }

    const Shrunk& projector_for(const std::string& name, const HierarchyStructure& hs,
                                HarModel top) {
        if (const auto it = projectors_.find(name); it != projectors_.end()) {
            return it->second;
        }
        std::vector<ModelFit> fits;
        fits.reserve(hs.size());
        for (std::size_t j = 0; j < hs.size(); ++j) {
            fits.push_back(one_step_fit(node_model(hs, j, top), hs.labels[j]));
        }
        const auto E = insample_error_matrix(fits);
        ShrinkOptions opts;
        opts.forced_lambda = config_.forced_lambda;
        opts.labels = hs.labels;
        const auto cov = shrink_covariance(E, opts);
        return projectors_
            .emplace(name, Shrunk{MintProjector(cov.W, hs.constraints), cov.lambda})
            .first->second;
    }

    double forecast_procedure(Procedure p, std::size_t h, TaskOutput& out) {
        switch (p) {
        case Procedure::Har:
            return emit_direct(p, h, fitted_forecast(HarModel::Har, "RV", h), out);
        case Procedure::Sv:
            return emit_direct(p, h, fitted_forecast(HarModel::SvHar, "RV", h), out);
        case Procedure::Pv3:
            return emit_direct(p, h, fitted_forecast(HarModel::Pv3Har, "RV", h), out);
        default:
            break;
        }
        const std::string name = config_.hierarchy_of(p);
        const auto& hs = hierarchies_.at(name);
        const HarModel top = sign_family(p) ? HarModel::SvHar : HarModel::Pv3Har;
        Eigen::VectorXd reconciled;
        if (is_shrinkage(p)) {
            Eigen::VectorXd base(static_cast<Eigen::Index>(hs.size()));
            for (std::size_t j = 0; j < hs.size(); ++j) {
                base(static_cast<Eigen::Index>(j)) =
                    fitted_forecast(node_model(hs, j, top), hs.labels[j], h);
            }
            reconciled = projector_for(name, hs, top).projector.apply(base);
        } else {
            Eigen::VectorXd bottom(static_cast<Eigen::Index>(hs.n_bottom()));
            for (std::size_t j = 0; j < hs.n_bottom(); ++j) {
                bottom(static_cast<Eigen::Index>(j)) =
                    fitted_forecast(HarModel::NodeHar, hs.labels[hs.n_upper() + j], h);
            }
            reconciled = bottom_up(bottom, hs.structural);
        }
        for (std::size_t j = 0; j < hs.size(); ++j) {
            out.records.push_back({data_.asset_id, data_.dates[origin_], h, hs.labels[j],
                                   std::string(procedure_name(p)),
                                   reconciled(static_cast<Eigen::Index>(j))});
        }
        return reconciled(static_cast<Eigen::Index>(hs.index_of("RV")));
    }

    double emit_direct(Procedure p, std::size_t h, double value, TaskOutput& out) {
        out.records.push_back(
            {data_.asset_id, data_.dates[origin_], h, "RV", std::string(procedure_name(p)), value});
        return value;
    }

    const ExperimentConfig& config_;
    const std::map<std::string, HierarchyStructure>& hierarchies_;
    const AssetData& data_;
    std::size_t origin_;
    std::map<std::tuple<HarModel, std::string, std::size_t>, double> forecasts_;
    std::map<std::tuple<HarModel, std::string>, ModelFit> fits_;
    std::map<std::string, Shrunk> projectors_;
};

void check_asset(const AssetData& data, const ExperimentConfig& config,
                 const std::map<std::string, HierarchyStructure>& hierarchies) {
    const std::size_t max_h = *std::max_element(config.horizons.begin(), config.horizons.end());
    const std::size_t required = config.window + max_h;
    if (data.size() < required) {
        throw DataError("asset " + data.asset_id + ": need at least " + std::to_string(required) +
                        " days (window " + std::to_string(config.window) + " + horizon " +
                        std::to_string(max_h) + "), have " + std::to_string(data.size()));
    }
    std::vector<std::string> needed{"RV"};
    for (const auto& [name, hs] : hierarchies) {
        needed.insert(needed.end(), hs.labels.begin(), hs.labels.end());
    }
    for (const auto& label : needed) {
        const auto it = data.series.find(label);
        if (it == data.series.end()) {
            throw DataError("asset " + data.asset_id + ": series '" + label + "' missing");
        }
        if (it->second.size() != data.size()) {
            throw DataError("asset " + data.asset_id + ": series '" + label + "' has " +
                            std::to_string(it->second.size()) + " days, dates have " +
                            std::to_string(data.size()));
        }
    }
}

// ------------------------------------------------------------- evaluation

struct SeriesKey {
    std::string asset;
    std::size_t horizon;
    std::string procedure;
    auto operator<=>(const SeriesKey&) const = default;
};

struct Aligned {
    std::vector<std::string> dates;
    std::vector<const LossRecord*> rows;
};

std::vector<double> losses_of(const Aligned& a, LossKind kind) {
    std::vector<double> out;
    out.reserve(a.rows.size());
    for (const auto* r : a.rows) {
        out.push_back(r->loss(kind));
    }
    return out;
}

std::uint64_t stream_id(std::size_t asset, LossKind kind, std::size_t horizon) {
    return (static_cast<std::uint64_t>(asset) << 32) ^
           (static_cast<std::uint64_t>(kind == LossKind::Mse ? 0 : 1) << 24) ^ horizon;
}

} // namespace

std::string_view procedure_name(Procedure p) {
    for (const auto& info : kProcedures) {
        if (info.id == p) {
            return info.name;
        }
    }
    return "?";
}

Procedure parse_procedure(std::string_view name) {
    std::string key;
    for (const char c : name) {
        if (c != '(' && c != ')') {
            key.push_back(c);
        }
    }
    for (const auto& info : kProcedures) {
        if (info.name == key) {
            return info.id;
        }
    }
    std::string valid;
    for (const auto& info : kProcedures) {
        valid += (valid.empty() ? "" : ", ") + std::string(info.name);
    }
    throw ConfigError("unknown procedure '" + std::string(name) + "'; valid: " + valid);
}

const std::vector<Procedure>& default_procedures() {
    static const std::vector<Procedure> procs{Procedure::Har,   Procedure::Sv,    Procedure::Pv3,
                                              Procedure::SvBu,  Procedure::Pv3Bu, Procedure::SvShr,
                                              Procedure::Pv3Shr};
    return procs;
}

bool is_reconciled(Procedure p) {
    return p != Procedure::Har && p != Procedure::Sv && p != Procedure::Pv3;
}

bool is_shrinkage(Procedure p) {
    return p == Procedure::SvShr || p == Procedure::Pv3Shr || p == Procedure::TsvShr ||
           p == Procedure::Tpv3Shr;
}

std::string ExperimentConfig::hierarchy_of(Procedure p) const {
    switch (p) {
    case Procedure::SvBu:
    case Procedure::SvShr:
        return "SSV";
    case Procedure::Pv3Bu:
    case Procedure::Pv3Shr:
        return "SPV3";
    case Procedure::TsvBu:
    case Procedure::TsvShr:
        return tsv_hierarchy;
    case Procedure::Tpv3Bu:
    case Procedure::Tpv3Shr:
        return tpv3_hierarchy;
    default:
        return {};
    }
}

std::vector<std::string> ExperimentConfig::hierarchies() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& name) {
        if (!name.empty() && std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(name);
        }
    };
    for (const auto p : procedures) {
        if (p == Procedure::Sv) {
            add("SSV");
        } else if (p == Procedure::Pv3) {
            add("SPV3");
        } else {
            add(hierarchy_of(p));
        }
        // The RV base forecast of a shrinkage hierarchy reads SV+/SV- or PV1..PV3.
        if (p == Procedure::TsvShr) {
            add("SSV");
        } else if (p == Procedure::Tpv3Shr) {
            add("SPV3");
        }
    }
    if (out.empty()) {
        add("SSV");
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (procedures.empty()) {
        throw ConfigError("no procedures configured");
    }
    for (std::size_t i = 0; i < procedures.size(); ++i) {
        for (std::size_t j = i + 1; j < procedures.size(); ++j) {
            if (procedures[i] == procedures[j]) {
                throw ConfigError("procedure " + std::string(procedure_name(procedures[i])) +
                                  " listed twice");
            }
        }
    }
    if (std::find(procedures.begin(), procedures.end(), Procedure::Har) == procedures.end()) {
        throw ConfigError("procedures must include the HAR benchmark");
    }
    if (horizons.empty()) {
        throw ConfigError("no forecast horizons configured");
    }
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (horizons[i] == 0) {
            throw ConfigError("forecast horizons must be at least 1");
        }
        for (std::size_t j = i + 1; j < horizons.size(); ++j) {
            if (horizons[i] == horizons[j]) {
                throw ConfigError("horizon " + std::to_string(horizons[i]) + " listed twice");
            }
        }
    }
    if (!temporal_sign(tsv_hierarchy)) {
        throw ConfigError("TSV hierarchy must be one of STSV, SV-T, T-SV, CTSV; got " +
                          tsv_hierarchy);
    }
    if (!temporal_quantile(tpv3_hierarchy)) {
        throw ConfigError("TPV3 hierarchy must be one of STPV3, PV3-T, T-PV3, CTPV3; got " +
                          tpv3_hierarchy);
    }
    if (alphas.size() != 2) {
        throw ConfigError("PV3 procedures need exactly two quantile probabilities");
    }
    std::size_t max_nodes = 1;
    for (const auto& name : hierarchies()) {
        max_nodes = std::max(max_nodes, build_hierarchy(name, alphas).size());
    }
    const std::size_t max_h = *std::max_element(horizons.begin(), horizons.end());
    const std::size_t min_window = std::max(kMonthlyLags + 1 + max_h, kMonthlyLags + max_nodes + 5);
    if (window < min_window) {
        throw ConfigError("window " + std::to_string(window) + " too short; need at least " +
                          std::to_string(min_window) + " days");
    }
    if (step == 0) {
        throw ConfigError("window step must be at least 1");
    }
    if (losses.empty()) {
        throw ConfigError("no loss functions configured");
    }
    if (!(mcs.alpha > 0.0 && mcs.alpha < 1.0) || !(nemenyi_alpha > 0.0 && nemenyi_alpha < 1.0)) {
        throw ConfigError("test levels must lie in (0, 1)");
    }
    if (mcs.n_boot < 100) {
        throw ConfigError("MCS needs at least 100 bootstrap resamples");
    }
    if (!(mcs.block_length >= 1.0)) {
        throw ConfigError("bootstrap block length must be at least 1");
    }
    if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0)) {
        throw ConfigError("forced shrinkage intensity must lie in [0, 1]");
    }
    if (!(floor_epsilon > 0.0)) {
        throw ConfigError("forecast floor must be positive");
    }
    if (jobs == 0) {
        throw ConfigError("jobs must be at least 1");
    }
    std::vector<SubPeriod> periods = sub_periods;
    std::sort(periods.begin(), periods.end(),
              [](const SubPeriod& a, const SubPeriod& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < periods.size(); ++i) {
        if (periods[i].last < periods[i].first) {
            throw ConfigError("sub-period " + periods[i].label + " ends before it starts");
        }
        if (i > 0 && !(periods[i - 1].last < periods[i].first)) {
            throw ConfigError("sub-periods " + periods[i - 1].label + " and " + periods[i].label +
                              " overlap");
        }
    }
}

AssetData asset_data_from_panel(const IntradayPanel& panel, std::span<const std::string> names,
                                std::span<const double> alphas) {
    AssetData data;
    data.asset_id = panel.asset_id();
    for (const auto& day : panel.days()) {
        data.dates.push_back(day.date);
    }
    for (const auto& name : names) {
        const auto hs = build_hierarchy(name, alphas, kDefaultSegmentLength, panel.grid_size());
        merge_node_series(data, node_series_from_panel(panel, hs));
    }
    return data;
}

void merge_node_series(AssetData& data, const NodeSeriesSet& nodes) {
    if (data.dates.empty()) {
        data.dates = nodes.dates;
    } else if (data.dates != nodes.dates) {
        throw DataError("asset " + data.asset_id + ": node series dates do not match");
    }
    for (std::size_t j = 0; j < nodes.hierarchy.size(); ++j) {
        const auto& label = nodes.hierarchy.labels[j];
        if (data.series.find(label) == data.series.end()) {
            data.series.emplace(label, nodes.column(label));
        }
    }
}

// ----------------------------------------------------------------- store

void ForecastStore::append(ForecastRecord record) {
    require_plain(record.asset, "asset");
    require_plain(record.origin_date, "date");
    require_plain(record.node, "node");
    require_plain(record.method, "method");
    auto key = store_key(record);
    if (!keys_.insert(std::move(key)).second) {
        throw DataError("duplicate forecast record (" + record.asset + ", " + record.origin_date +
                        ", h=" + std::to_string(record.horizon) + ", " + record.node + ", " +
                        record.method + ")");
    }
    records_.push_back(std::move(record));
}

void ForecastStore::write_csv(const std::filesystem::path& path) const {
    auto out = open_out(path);
    out << "asset,origin_date,horizon,node,method,value\n";
    for (const auto& r : records_) {
        out << r.asset << ',' << r.origin_date << ',' << r.horizon << ',' << r.node << ','
            << r.method << ',' << format_double(r.value) << '\n';
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

ForecastStore ForecastStore::read_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    ForecastStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = chomp(line);
        if (lineno == 1 || text.empty()) {
            continue;
        }
        const auto f = split_fields(text);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 6) {
            throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
        }
        store.append({std::string(f[0]), std::string(f[1]), parse_size(f[2], where),
                      std::string(f[3]), std::string(f[4]), parse_double(f[5], where)});
    }
    return store;
}

std::size_t ForecastStore::audit_coherence(const ExperimentConfig& config) const {
    std::map<std::string, HierarchyStructure> hierarchies;
    using RowKey = std::tuple<std::string, std::string, std::size_t, std::string>;
    std::map<RowKey, std::pair<std::vector<double>, std::vector<bool>>> rows;
    for (const auto& r : records_) {
        const auto p = parse_procedure(r.method);
        if (!is_reconciled(p)) {
            continue;
        }
        const auto name = config.hierarchy_of(p);
        auto hit = hierarchies.find(name);
        if (hit == hierarchies.end()) {
            hit = hierarchies.emplace(name, build_hierarchy(name, config.alphas)).first;
        }
        const auto& hs = hit->second;
        auto& row = rows[RowKey{r.asset, r.origin_date, r.horizon, r.method}];
        if (row.first.empty()) {
            row.first.assign(hs.size(), 0.0);
            row.second.assign(hs.size(), false);
        }
        const auto j = hs.index_of(r.node);
        row.first[j] = r.value;
        row.second[j] = true;
    }
    for (const auto& [key, row] : rows) {
        const auto& [asset, date, h, method] = key;
        const auto& hs = hierarchies.at(config.hierarchy_of(parse_procedure(method)));
        const std::string where =
            asset + " " + date + " h=" + std::to_string(h) + " " + method;
        for (std::size_t j = 0; j < row.second.size(); ++j) {
            if (!row.second[j]) {
                throw DataError("reconciled row " + where + " lacks node " + hs.labels[j]);
            }
        }
        const double scale =
            std::max(1.0, std::abs(*std::max_element(row.first.begin(), row.first.end(),
                                                     [](double a, double b) {
                                                         return std::abs(a) < std::abs(b);
                                                     })));
        const double resid = coherence_residual(row.first, hs);
        if (!(resid <= 1e-8 * scale)) {
            throw NumericalError("reconciled row " + where + " is incoherent (residual " +
                                 format_double(resid) + ")");
        }
    }
    return rows.size();
}

void LossTable::write_csv(const std::filesystem::path& path) const {
    auto out = open_out(path);
    out << "asset,origin_date,horizon,procedure,actual,forecast,mse,qlike\n";
    for (const auto& r : records) {
        out << r.asset << ',' << r.origin_date << ',' << r.horizon << ',' << r.procedure << ','
            << format_double(r.actual) << ',' << format_double(r.forecast) << ','
            << format_double(r.mse) << ',' << format_double(r.qlike) << '\n';
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

LossTable LossTable::read_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    LossTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = chomp(line);
        if (lineno == 1 || text.empty()) {
            continue;
        }
        const auto f = split_fields(text);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 8) {
            throw DataError(where + ": expected 8 fields, got " + std::to_string(f.size()));
        }
        table.records.push_back({std::string(f[0]), std::string(f[1]), parse_size(f[2], where),
                                 std::string(f[3]), parse_double(f[4], where),
                                 parse_double(f[5], where), parse_double(f[6], where),
                                 parse_double(f[7], where)});
    }
    return table;
}

// ---------------------------------------------------------------- driver

std::size_t origin_count(std::size_t length, std::size_t window, std::size_t horizon,
                         std::size_t step) {
    if (step == 0 || length < window + horizon) {
        return 0;
    }
    const std::size_t span = length - window - horizon + 1;
    return (span + step - 1) / step;
}

RunResult run_rolling(const ExperimentConfig& config, std::span<const AssetData> data) {
    config.validate();
    if (data.empty()) {
        throw DataError("no asset data supplied");
    }
    std::map<std::string, HierarchyStructure> hierarchies;
    for (const auto& name : config.hierarchies()) {
        hierarchies.emplace(name, build_hierarchy(name, config.alphas));
    }
    for (const auto& asset : data) {
        check_asset(asset, config, hierarchies);
    }

    const std::size_t min_h = *std::min_element(config.horizons.begin(), config.horizons.end());
    std::vector<std::pair<std::size_t, std::size_t>> tasks;  // (asset, origin)
    for (std::size_t a = 0; a < data.size(); ++a) {
        for (std::size_t t = config.window; t + min_h <= data[a].size(); t += config.step) {
            tasks.emplace_back(a, t);
        }
    }

    std::vector<TaskOutput> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) {
                return;
            }
            try {
                const auto [a, t] = tasks[i];
                results[i] = OriginTask(config, hierarchies, data[a], t).run();
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };
    const std::size_t jobs = std::min(config.jobs, std::max<std::size_t>(1, tasks.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }

    RunResult run;
    FloorPolicy floor(config.floor_epsilon);
    std::map<std::string, std::pair<double, std::size_t>> lambda_acc;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto& res = results[i];
        const auto& asset = data[tasks[i].first];
        const auto& date = asset.dates[tasks[i].second];
        for (auto& rec : res.records) {
            run.store.append(std::move(rec));
        }
        for (const auto& [h, p, value, target] : res.scored) {
            LossRecord lr;
            lr.asset = asset.asset_id;
            lr.origin_date = date;
            lr.horizon = h;
            lr.procedure = std::string(procedure_name(p));
            lr.actual = target;
            lr.forecast = floor.apply(value);
            lr.mse = squared_error(target, lr.forecast);
            if (!(target > 0.0)) {
                throw DataError("asset " + asset.asset_id + ": realized target at " + date +
                                " (h=" + std::to_string(h) + ") is not positive; QLIKE undefined");
            }
            lr.qlike = qlike(target, lr.forecast, config.qlike_mode);
            if (!std::isfinite(lr.qlike)) {
                throw NumericalError("non-finite QLIKE for " + lr.procedure + " at " + date);
            }
            run.losses.records.push_back(std::move(lr));
        }
        for (const auto& [name, lambda] : res.lambdas) {
            auto& acc = lambda_acc[name];
            acc.first += lambda;
            acc.second += 1;
        }
        run.diagnostics.jitter_events += res.jitters;
        res = TaskOutput{};
    }
    run.diagnostics.origins = tasks.size();
    run.diagnostics.floored = floor.floored();
    for (const auto& [name, acc] : lambda_acc) {
        run.diagnostics.mean_lambda[name] = acc.first / static_cast<double>(acc.second);
    }
    if (run.diagnostics.floored > 0) {
        logger()->warn("{} forecasts floored at {}", run.diagnostics.floored,
                       format_double(config.floor_epsilon));
    }
    return run;
}

// ------------------------------------------------------------ evaluation

EvaluationReport evaluate_losses(const LossTable& table, const ExperimentConfig& config,
                                 std::string label) {
    EvaluationReport rep;
    rep.label = std::move(label);
    rep.losses = config.losses;

    std::map<SeriesKey, Aligned> series;
    std::set<std::string> seen_proc;
    std::set<std::size_t> seen_h;
    for (const auto& r : table.records) {
        if (std::find(rep.assets.begin(), rep.assets.end(), r.asset) == rep.assets.end()) {
            rep.assets.push_back(r.asset);
        }
        seen_proc.insert(r.procedure);
        seen_h.insert(r.horizon);
        auto& s = series[SeriesKey{r.asset, r.horizon, r.procedure}];
        s.dates.push_back(r.origin_date);
        s.rows.push_back(&r);
    }
    for (const auto p : config.procedures) {
        const std::string name(procedure_name(p));
        if (seen_proc.count(name) > 0) {
            rep.procedures.push_back(name);
        }
    }
    for (const auto h : config.horizons) {
        if (seen_h.count(h) > 0) {
            rep.horizons.push_back(h);
        }
    }
    if (std::find(rep.procedures.begin(), rep.procedures.end(), "HAR") == rep.procedures.end()) {
        throw DataError("loss table has no HAR benchmark rows");
    }
    const auto k = rep.procedures.size();
    const auto har = static_cast<std::size_t>(
        std::find(rep.procedures.begin(), rep.procedures.end(), "HAR") - rep.procedures.begin());

    // Every procedure must be scored on the same origins within (asset, h).
    for (const auto& asset : rep.assets) {
        for (const auto h : rep.horizons) {
            const auto base = series.find(SeriesKey{asset, h, "HAR"});
            if (base == series.end()) {
                throw DataError("no HAR losses for " + asset + " h=" + std::to_string(h));
            }
            for (const auto& proc : rep.procedures) {
                const auto it = series.find(SeriesKey{asset, h, proc});
                if (it == series.end() || it->second.dates != base->second.dates) {
                    throw DataError("losses of " + proc + " for " + asset + " h=" +
                                    std::to_string(h) + " are not aligned with HAR");
                }
            }
        }
    }

    std::vector<std::string> benchmarks;
    for (const auto* b : {"HAR", "SV", "PV3"}) {
        if (std::find(rep.procedures.begin(), rep.procedures.end(), b) != rep.procedures.end()) {
            benchmarks.emplace_back(b);
        }
    }

    for (const auto kind : rep.losses) {
        for (const auto h : rep.horizons) {
            std::map<std::string, std::vector<double>> ratios_by_proc;
            std::map<std::string, double> mean_by_proc;
            for (std::size_t a = 0; a < rep.assets.size(); ++a) {
                const auto& asset = rep.assets[a];
                std::vector<std::vector<double>> cols;
                for (const auto& proc : rep.procedures) {
                    cols.push_back(losses_of(series.at(SeriesKey{asset, h, proc}), kind));
                }
                const double bench = mean(cols[har]);
                for (std::size_t i = 0; i < k; ++i) {
                    const double m = mean(cols[i]);
                    const double ratio = loss_ratio(m, bench);
                    rep.ratios.push_back({asset, kind, h, rep.procedures[i], m, ratio});
                    ratios_by_proc[rep.procedures[i]].push_back(ratio);
                    mean_by_proc[rep.procedures[i]] += m / static_cast<double>(rep.assets.size());
                }

                const std::size_t n = cols[0].size();
                if (n >= 30) {
                    for (const auto& b : benchmarks) {
                        const auto bi = static_cast<std::size_t>(
                            std::find(rep.procedures.begin(), rep.procedures.end(), b) -
                            rep.procedures.begin());
                        for (std::size_t i = 0; i < k; ++i) {
                            if (i == bi) {
                                continue;
                            }
                            rep.dm.push_back({asset, kind, h, rep.procedures[i], b,
                                              dm_test(cols[i], cols[bi], h)});
                        }
                    }
                } else {
                    logger()->warn("{} h={} {}: {} observations, DM tests skipped", asset, h,
                                   loss_kind_name(kind), n);
                }

                if (n >= 50 && k >= 2) {
                    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
                    for (std::size_t i = 0; i < k; ++i) {
                        m.col(static_cast<Eigen::Index>(i)) =
                            Eigen::Map<const Eigen::VectorXd>(cols[i].data(),
                                                              static_cast<Eigen::Index>(n));
                    }
                    McsOptions opts = config.mcs;
                    opts.seed = derive_seed(config.seed, stream_id(a, kind, h));
                    opts.jobs = config.jobs;
                    const auto res = mcs(m, opts);
                    for (std::size_t i = 0; i < k; ++i) {
                        rep.mcs.push_back({asset, kind, h, rep.procedures[i], res.p_values[i],
                                           res.included[i]});
                    }
                } else {
                    logger()->warn("{} h={} {}: {} observations, MCS skipped", asset, h,
                                   loss_kind_name(kind), n);
                }
            }
            for (const auto& proc : rep.procedures) {
                rep.ratios.push_back({"geo_mean", kind, h, proc, mean_by_proc[proc],
                                      geo_mean_ratio(ratios_by_proc[proc])});
            }

            // Nemenyi on pooled (asset, origin) rows.
            std::size_t rows = 0;
            for (const auto& asset : rep.assets) {
                rows += series.at(SeriesKey{asset, h, "HAR"}).rows.size();
            }
            if (rows >= 10 && k >= 2) {
                Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
                Eigen::Index r0 = 0;
                for (const auto& asset : rep.assets) {
                    Eigen::Index n = 0;
                    for (std::size_t i = 0; i < k; ++i) {
                        const auto col =
                            losses_of(series.at(SeriesKey{asset, h, rep.procedures[i]}), kind);
                        n = static_cast<Eigen::Index>(col.size());
                        m.block(r0, static_cast<Eigen::Index>(i), n, 1) =
                            Eigen::Map<const Eigen::VectorXd>(col.data(), n);
                    }
                    r0 += n;
                }
                const auto res = mcb_nemenyi(m, config.nemenyi_alpha);
                for (std::size_t i = 0; i < k; ++i) {
                    rep.nemenyi.push_back(
                        {kind, h, rep.procedures[i], res.mean_ranks[i], res.half_width});
                }
            } else {
                logger()->warn("h={} {}: {} rows, Nemenyi ranks skipped", h, loss_kind_name(kind),
                               rows);
            }
        }
    }
    return rep;
}

std::vector<EvaluationReport> sub_period_report(const LossTable& table,
                                                std::span<const SubPeriod> periods,
                                                const ExperimentConfig& config) {
    std::vector<SubPeriod> sorted(periods.begin(), periods.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const SubPeriod& a, const SubPeriod& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i].last < sorted[i].first) {
            throw ConfigError("sub-period " + sorted[i].label + " ends before it starts");
        }
        if (i > 0 && !(sorted[i - 1].last < sorted[i].first)) {
            throw ConfigError("sub-periods " + sorted[i - 1].label + " and " + sorted[i].label +
                              " overlap");
        }
    }
    std::vector<EvaluationReport> out;
    for (const auto& period : periods) {
        LossTable part;
        for (const auto& r : table.records) {
            if (r.origin_date >= period.first && r.origin_date <= period.last) {
                part.records.push_back(r);
            }
        }
        if (part.records.empty()) {
            logger()->warn("sub-period {} has no forecasts, omitted", period.label);
            continue;
        }
        out.push_back(evaluate_losses(part, config, period.label));
    }
    return out;
}

} // namespace rvrecon
