#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rvrecon {

inline constexpr std::size_t kDefaultGridSize = 390;
inline constexpr std::size_t kDefaultSegmentLength = 78;
inline constexpr std::array<double, 2> kDefaultAlphas{0.10, 0.75};

struct IntradayDay {
    std::string date;
    std::vector<double> returns;
};

/**
 * Per-day grids of intraday log-returns for one asset.
 *
 * Every day holds exactly grid_size() finite returns and dates (ISO-8601,
 * compared lexicographically) are strictly increasing. add_day() enforces
 * both and throws DataError otherwise.
 */
class IntradayPanel {
public:
    explicit IntradayPanel(std::string asset_id, std::size_t grid_size = kDefaultGridSize);

    void add_day(std::string date, std::vector<double> returns);

    [[nodiscard]] const std::string& asset_id() const noexcept { return asset_id_; }
    [[nodiscard]] std::size_t grid_size() const noexcept { return grid_size_; }
    [[nodiscard]] std::size_t size() const noexcept { return days_.size(); }
    [[nodiscard]] bool empty() const noexcept { return days_.empty(); }
    [[nodiscard]] const std::vector<IntradayDay>& days() const noexcept { return days_; }
    [[nodiscard]] const IntradayDay& operator[](std::size_t i) const { return days_[i]; }

private:
    std::string asset_id_;
    std::size_t grid_size_;
    std::vector<IntradayDay> days_;
};

/// r_i = log(P_i) - log(P_{i-1}); throws DataError on a non-positive price.
std::vector<double> log_returns(std::span<const double> prices);

/// Sum of squared returns; throws DataError on an empty vector.
double realized_variance(std::span<const double> returns);

struct Semivariances {
    double positive = 0.0;  // r >= 0
    double negative = 0.0;  // r < 0
};

Semivariances semivariances(std::span<const double> returns);

/// Linear interpolation between order statistics at 0-based position
/// (n-1)*tau. `sorted` must be ascending and non-empty.
double empirical_quantile(std::span<const double> sorted, double tau);

/// z_i = r_i / sqrt(RV/N). An all-zero day maps to all zeros.
std::vector<double> standardized_returns(std::span<const double> returns);

/// Quantile thresholds in return units, sqrt(RV/N) * Q_z(alpha_l).
std::vector<double> partial_variance_thresholds(std::span<const double> returns,
                                                std::span<const double> alphas);

std::vector<double> partial_variances(std::span<const double> returns,
                                      std::span<const double> alphas);

/// z_l = sum of r^2 over (c_{l-1}, c_l] with c_0 = -inf and c_p = +inf.
std::vector<double> threshold_decomposition(std::span<const double> returns,
                                            std::span<const double> thresholds);

/// w_k = sum of r^2 over slots m(k-1)+1 .. mk.
std::vector<double> temporal_decomposition(std::span<const double> returns,
                                           std::size_t segment_length);

/**
 * Rule assigning each intraday return to one of bins() value classes.
 *
 * sign_split() reproduces the semivariance indicator (zero returns land in
 * the upper bin). The threshold-based rules use half-open (c_{l-1}, c_l]
 * intervals, so a return equal to a threshold belongs to the lower bin.
 */
class ReturnBinning {
public:
    static ReturnBinning sign_split();
    static ReturnBinning fixed(std::vector<double> thresholds);
    /// Day-level quantile thresholds of the standardized returns.
    static ReturnBinning day_quantiles(std::span<const double> returns,
                                       std::span<const double> alphas);
    /// Slot-specific thresholds, one row per intraday slot. Rows must be
    /// non-decreasing; tied thresholds leave the bins between them empty.
    static ReturnBinning per_slot(Eigen::MatrixXd thresholds);

    [[nodiscard]] std::size_t bins() const noexcept { return bins_; }
    [[nodiscard]] std::size_t bin_of(std::size_t slot, double r) const;

private:
    enum class Mode { Sign, Fixed, Scaled, PerSlot };

    Mode mode_ = Mode::Sign;
    std::size_t bins_ = 2;
    double scale_ = 1.0;
    std::vector<double> thresholds_;
    Eigen::MatrixXd slot_thresholds_;
};

/// Sum of r^2 per bin.
std::vector<double> binned_decomposition(std::span<const double> returns,
                                         const ReturnBinning& binning);

/// bins x segments grid, stored bin-major (row l holds segments 1..K).
struct ComponentGrid {
    std::size_t bins = 0;
    std::size_t segments = 0;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t bin, std::size_t segment) const {
        return values[bin * segments + segment];
    }
    [[nodiscard]] std::vector<double> bin_totals() const;
    [[nodiscard]] std::vector<double> segment_totals() const;
    [[nodiscard]] double total() const;
};

ComponentGrid combined_decomposition(std::span<const double> returns,
                                     const ReturnBinning& binning,
                                     std::size_t segment_length);

/// Per-slot volatility scale, normalized so that mean(sigma^2) = 1.
struct PeriodicityProfile {
    std::vector<double> sigma;
};

/**
 * Robust intraday periodicity: sigma_i = 1.4826 * median_t |r_{i,t}|,
 * rescaled to unit mean square.
 *
 * This is a deterministic stand-in for the weighted standard deviation
 * filter usually applied here; it matches that filter only for
 * outlier-free Gaussian returns. Requires at least 50 days.
 */
PeriodicityProfile estimate_periodicity(const IntradayPanel& panel);

/// r*_i = r_i / sigma_i.
std::vector<double> filter_periodicity(std::span<const double> returns,
                                       const PeriodicityProfile& profile);

/**
 * Bi-power variation (pi/2) * N/(N-1) * sum_{i>=2} |r_i| |r_{i-1}|.
 *
 * Uses adjacent-lag products. A literal reading of the product as
 * |r_i| * |r_i| would collapse to a rescaled RV and lose jump robustness.
 */
double bipower_variation(std::span<const double> filtered_returns);

/// c_{i,j} = sigma_i * sqrt(bpv/N) * Phi^{-1}(tau_j); one row per slot.
Eigen::MatrixXd pv_star_thresholds(const PeriodicityProfile& profile, double bpv,
                                   std::size_t grid_size, std::span<const double> taus);

/// Filter, compute BPV and build the slot-specific binning for one day.
ReturnBinning pv_star_binning(std::span<const double> returns,
                              const PeriodicityProfile& profile,
                              std::span<const double> taus);

enum class DecompositionKind { Rv, Sv, Pv, Threshold, Temporal, Combined, PvStar };

struct DecompositionSpec {
    DecompositionKind kind = DecompositionKind::Rv;
    /// Value partition crossed with time when kind == Combined
    /// (one of Sv, Pv, Threshold, PvStar).
    DecompositionKind cross = DecompositionKind::Pv;
    std::vector<double> probabilities{kDefaultAlphas.begin(), kDefaultAlphas.end()};
    std::size_t segment_length = kDefaultSegmentLength;
    std::vector<double> thresholds;

    /// Throws ConfigError on inconsistent parameters.
    void validate(std::size_t grid_size) const;
};

struct DailyMeasures {
    std::string date;
    double rv = 0.0;
    std::vector<std::string> labels;
    std::vector<double> components;
};

std::vector<std::string> component_labels(const DecompositionSpec& spec, std::size_t grid_size);

/// Decompose one day. `profile` is required for PvStar (direct or crossed).
DailyMeasures decompose(std::string date, std::span<const double> returns,
                        const DecompositionSpec& spec,
                        const PeriodicityProfile* profile = nullptr);

} // namespace rvrecon
