#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rvrecon {

/// Daily series keyed by node label ("RV", "SV+", "T3PV2", ...).
using SeriesMap = std::map<std::string, std::vector<double>, std::less<>>;

enum class HarModel {
    Har,     // RV on RV lags
    SvHar,   // daily RV lag split into SV+ and SV-
    Pv3Har,  // daily RV lag split into PV1, PV2, PV3
    NodeHar  // any single series on its own lags
};

std::string_view har_model_name(HarModel model);
HarModel parse_har_model(std::string_view name);

/// Number of coefficients: HAR 4, SV-HAR 5, PV3-HAR 6, node HAR 4.
std::size_t coefficient_count(HarModel model);

inline constexpr std::size_t kWeeklyLags = 5;
inline constexpr std::size_t kMonthlyLags = 22;

/**
 * Regression layout for the HAR family.
 *
 * Row r corresponds to origin t = origins[r] (0-based day index of the first
 * target day). Columns: intercept, one lag-1 column per daily predictor, then
 * the trailing 5- and 22-day means of the dependent series ending at t-1. The
 * target is the mean of the dependent series over t .. t+h-1. There are
 * T - 22 - h + 1 rows; `latest` is the regressor row for origin T.
 */
struct HarDesign {
    Eigen::MatrixXd regressors;
    Eigen::VectorXd target;
    std::vector<std::size_t> origins;
    Eigen::RowVectorXd latest;
    std::size_t horizon = 1;
};

/// Minimum series length for a design with horizon h (23 + h).
std::size_t minimum_length(std::size_t horizon);

HarDesign build_design(std::span<const double> dependent,
                       std::span<const std::span<const double>> daily_predictors,
                       std::size_t horizon);

/// Model-level design. HAR/SV-HAR/PV3-HAR read "RV" plus "SV+","SV-" or
/// "PV1".."PV3"; NodeHar reads `node` only.
HarDesign build_design(const SeriesMap& series, HarModel model, std::size_t horizon,
                       std::string_view node = "RV");

/// Same, restricted to days first .. first+count-1 of every series.
HarDesign build_design(const SeriesMap& series, HarModel model, std::size_t horizon,
                       std::string_view node, std::size_t first, std::size_t count);

struct ModelFit {
    HarModel model = HarModel::NodeHar;
    std::size_t horizon = 1;
    std::vector<std::size_t> origins;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    /// HC1 standard errors; nullopt for aliased columns or when not requested.
    std::vector<std::optional<double>> robust_se;
    std::size_t rank = 0;
    /// |R_00| / |R_rr| of the rank-revealing factorization.
    double condition = 1.0;
};

struct FitOptions {
    bool robust_se = true;
};

/// Minimum-norm least squares via a complete orthogonal decomposition, so
/// rank-deficient designs (constant series) still return a defined answer.
ModelFit ols_fit(const HarDesign& design, HarModel model = HarModel::NodeHar,
                 FitOptions options = {});

/// White/HC1 standard errors. Aliased columns of a rank-deficient design
/// are reported as nullopt.
std::vector<std::optional<double>> robust_se(const HarDesign& design, const ModelFit& fit);

/// Classical OLS standard errors s^2 (X'X)^{-1}, same conventions.
std::vector<std::optional<double>> classical_se(const HarDesign& design, const ModelFit& fit);

double forecast(const ModelFit& fit, std::span<const double> regressor_row);
double forecast(const ModelFit& fit, const Eigen::RowVectorXd& regressor_row);

/// max(value, epsilon). Thread-safe counter of floored values.
class FloorPolicy {
public:
    explicit FloorPolicy(double epsilon = 1e-10) : epsilon_(epsilon) {}

    FloorPolicy(const FloorPolicy&) = delete;
    FloorPolicy& operator=(const FloorPolicy&) = delete;

    [[nodiscard]] double epsilon() const noexcept { return epsilon_; }
    [[nodiscard]] std::size_t floored() const noexcept { return floored_.load(); }

    double apply(double value);

private:
    double epsilon_;
    std::atomic<std::size_t> floored_{0};
};

double floor_forecast(double value, FloorPolicy& policy);

} // namespace rvrecon
