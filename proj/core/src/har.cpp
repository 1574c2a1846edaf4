#include "rvrecon/har.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/QR>

#include "rvrecon/error.hpp"

namespace rvrecon {
namespace {

const std::vector<double>& lookup(const SeriesMap& series, std::string_view label) {
    const auto it = series.find(label);
    if (it == series.end()) {
        throw DataError("series '" + std::string(label) + "' not available");
    }
    return it->second;
}

double window_mean(std::span<const double> x, std::size_t end, std::size_t length) {
    // mean of x[end-length .. end-1]
    double sum = 0.0;
    for (std::size_t j = end - length; j < end; ++j) {
        sum += x[j];
    }
    return sum / static_cast<double>(length);
}

void fill_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, std::span<const double> dependent,
              std::span<const std::span<const double>> daily, std::size_t t) {
    Eigen::Index c = 0;
    row(c++) = 1.0;
    for (const auto& p : daily) {
        row(c++) = p[t - 1];
    }
    row(c++) = window_mean(dependent, t, kWeeklyLags);
    row(c++) = window_mean(dependent, t, kMonthlyLags);
}

Eigen::MatrixXd column_scaled(const Eigen::MatrixXd& x, Eigen::VectorXd& scale) {
    scale = x.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
        if (scale(j) == 0.0) {
            scale(j) = 1.0;
        }
    }
    return x * scale.cwiseInverse().asDiagonal();
}

constexpr double kRankThreshold = 1e-10;

// Aliased columns (outside the pivoted leading block of a rank-deficient
// design) are dropped; the remaining block gets the usual sandwich.
std::vector<std::optional<double>> sandwich_se(const HarDesign& design, const ModelFit& fit,
                                               bool robust) {
    const Eigen::MatrixXd& x = design.regressors;
    const auto n = x.rows();
    const auto k = x.cols();
    std::vector<std::optional<double>> out(static_cast<std::size_t>(k));

    Eigen::VectorXd scale;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankThreshold);
    cod.compute(column_scaled(x, scale));
    const auto rank = cod.rank();
    if (rank == 0 || n <= rank) {
        return out;
    }
    std::vector<Eigen::Index> kept(static_cast<std::size_t>(rank));
    for (Eigen::Index j = 0; j < rank; ++j) {
        kept[static_cast<std::size_t>(j)] = cod.colsPermutation().indices()(j);
    }
    std::sort(kept.begin(), kept.end());
    const Eigen::MatrixXd xi = x(Eigen::all, kept);

    const Eigen::MatrixXd bread =
        (xi.transpose() * xi).ldlt().solve(Eigen::MatrixXd::Identity(rank, rank));
    const double dof = static_cast<double>(n - rank);
    Eigen::MatrixXd cov;
    if (robust) {
        const Eigen::MatrixXd meat =
            xi.transpose() * fit.residuals.array().square().matrix().asDiagonal() * xi;
        cov = bread * meat * bread * (static_cast<double>(n) / dof);
    } else {
        cov = (fit.residuals.squaredNorm() / dof) * bread;
    }
    for (Eigen::Index j = 0; j < rank; ++j) {
        out[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])] =
            std::sqrt(std::max(0.0, cov(j, j)));
    }
    return out;
}

} // namespace

std::string_view har_model_name(HarModel model) {
    switch (model) {
    case HarModel::Har:
        return "HAR";
    case HarModel::SvHar:
        return "SV_HAR";
    case HarModel::Pv3Har:
        return "PV3_HAR";
    case HarModel::NodeHar:
        return "NODE_HAR";
    }
    return "?";
}

HarModel parse_har_model(std::string_view name) {
    if (name == "HAR") return HarModel::Har;
    if (name == "SV_HAR" || name == "SV") return HarModel::SvHar;
    if (name == "PV3_HAR" || name == "PV3") return HarModel::Pv3Har;
    if (name == "NODE_HAR" || name == "NODE") return HarModel::NodeHar;
    throw ConfigError("unknown HAR model '" + std::string(name) +
                      "'; valid: HAR, SV_HAR, PV3_HAR, NODE_HAR");
}

std::size_t coefficient_count(HarModel model) {
    switch (model) {
    case HarModel::Har:
    case HarModel::NodeHar:
        return 4;
    case HarModel::SvHar:
        return 5;
    case HarModel::Pv3Har:
        return 6;
    }
    return 0;
}

std::size_t minimum_length(std::size_t horizon) {
    return kMonthlyLags + 1 + horizon;
}

HarDesign build_design(std::span<const double> dependent,
                       std::span<const std::span<const double>> daily_predictors,
                       std::size_t horizon) {
    if (horizon == 0) {
        throw ConfigError("forecast horizon must be at least 1");
    }
    const std::size_t t_len = dependent.size();
    if (t_len < minimum_length(horizon)) {
        throw DataError("HAR design needs at least " + std::to_string(minimum_length(horizon)) +
                        " observations for h=" + std::to_string(horizon) + ", got " +
                        std::to_string(t_len));
    }
    for (const auto& p : daily_predictors) {
        if (p.size() != t_len) {
            throw DataError("HAR predictors must share the dependent series' dates");
        }
    }
    const std::size_t rows = t_len - kMonthlyLags - horizon + 1;
    const auto cols = static_cast<Eigen::Index>(daily_predictors.size() + 3);

    HarDesign d;
    d.horizon = horizon;
    d.regressors.resize(static_cast<Eigen::Index>(rows), cols);
    d.target.resize(static_cast<Eigen::Index>(rows));
    d.origins.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = kMonthlyLags + r;
        d.origins[r] = t;
        fill_row(d.regressors.row(static_cast<Eigen::Index>(r)), dependent, daily_predictors, t);
        double sum = 0.0;
        for (std::size_t j = t; j < t + horizon; ++j) {
            sum += dependent[j];
        }
        d.target(static_cast<Eigen::Index>(r)) = sum / static_cast<double>(horizon);
    }
    d.latest.resize(cols);
    fill_row(d.latest, dependent, daily_predictors, t_len);
    return d;
}

HarDesign build_design(const SeriesMap& series, HarModel model, std::size_t horizon,
                       std::string_view node, std::size_t first, std::size_t count) {
    auto window = [&](std::string_view label) {
        const auto& full = lookup(series, label);
        if (first + count > full.size()) {
            throw DataError("series '" + std::string(label) + "' has " +
                            std::to_string(full.size()) + " days, window needs " +
                            std::to_string(first + count));
        }
        return std::span<const double>(full).subspan(first, count);
    };
    std::vector<std::span<const double>> daily;
    std::span<const double> dependent;
    switch (model) {
    case HarModel::Har:
        dependent = window("RV");
        daily.push_back(dependent);
        break;
    case HarModel::SvHar:
        dependent = window("RV");
        daily.push_back(window("SV+"));
        daily.push_back(window("SV-"));
        break;
    case HarModel::Pv3Har:
        dependent = window("RV");
        daily.push_back(window("PV1"));
        daily.push_back(window("PV2"));
        daily.push_back(window("PV3"));
        break;
    case HarModel::NodeHar:
        dependent = window(node);
        daily.push_back(dependent);
        break;
    }
    return build_design(dependent, daily, horizon);
}

HarDesign build_design(const SeriesMap& series, HarModel model, std::size_t horizon,
                       std::string_view node) {
    const std::string dep = model == HarModel::NodeHar ? std::string(node) : "RV";
    return build_design(series, model, horizon, node, 0, lookup(series, dep).size());
}

ModelFit ols_fit(const HarDesign& design, HarModel model, FitOptions options) {
    const Eigen::MatrixXd& x = design.regressors;
    if (x.rows() == 0 || x.cols() == 0) {
        throw DataError("cannot fit an empty design");
    }
    if (!x.allFinite() || !design.target.allFinite()) {
        throw DataError("design contains non-finite entries");
    }
    if (static_cast<std::size_t>(x.cols()) != coefficient_count(model)) {
        throw ConfigError("design has " + std::to_string(x.cols()) + " columns, model " +
                          std::string(har_model_name(model)) + " expects " +
                          std::to_string(coefficient_count(model)));
    }

    // Scale columns so the rank threshold is relative to each column's size.
    Eigen::VectorXd scale;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankThreshold);
    cod.compute(column_scaled(x, scale));

    ModelFit fit;
    fit.model = model;
    fit.horizon = design.horizon;
    fit.origins = design.origins;
    fit.coefficients = cod.solve(design.target).cwiseQuotient(scale);
    fit.fitted = x * fit.coefficients;
    fit.residuals = design.target - fit.fitted;
    fit.rank = static_cast<std::size_t>(cod.rank());
    const auto r_diag = cod.matrixQTZ().diagonal().cwiseAbs();
    if (fit.rank > 0) {
        const double smallest = r_diag(static_cast<Eigen::Index>(fit.rank) - 1);
        fit.condition = smallest > 0.0 ? r_diag(0) / smallest
                                       : std::numeric_limits<double>::infinity();
    }
    if (options.robust_se) {
        fit.robust_se = robust_se(design, fit);
    } else {
        fit.robust_se.assign(static_cast<std::size_t>(x.cols()), std::nullopt);
    }
    return fit;
}

std::vector<std::optional<double>> robust_se(const HarDesign& design, const ModelFit& fit) {
    return sandwich_se(design, fit, true);
}

std::vector<std::optional<double>> classical_se(const HarDesign& design, const ModelFit& fit) {
    return sandwich_se(design, fit, false);
}

double forecast(const ModelFit& fit, std::span<const double> regressor_row) {
    if (regressor_row.size() != static_cast<std::size_t>(fit.coefficients.size())) {
        throw ConfigError("regressor row has " + std::to_string(regressor_row.size()) +
                          " entries, fit has " + std::to_string(fit.coefficients.size()) +
                          " coefficients");
    }
    double value = 0.0;
    for (std::size_t j = 0; j < regressor_row.size(); ++j) {
        value += fit.coefficients(static_cast<Eigen::Index>(j)) * regressor_row[j];
    }
    return value;
}

double forecast(const ModelFit& fit, const Eigen::RowVectorXd& regressor_row) {
    return forecast(fit, std::span<const double>(regressor_row.data(),
                                                 static_cast<std::size_t>(regressor_row.size())));
}

double FloorPolicy::apply(double value) {
    if (value < epsilon_ || !std::isfinite(value)) {
        floored_.fetch_add(1, std::memory_order_relaxed);
        return epsilon_;
    }
    return value;
}

double floor_forecast(double value, FloorPolicy& policy) {
    return policy.apply(value);
}

} // namespace rvrecon
