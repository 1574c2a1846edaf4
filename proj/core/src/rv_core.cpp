#include "rvrecon/rv_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "rvrecon/distributions.hpp"
#include "rvrecon/error.hpp"
#include "compensated_sum.hpp"

namespace rvrecon {
namespace {

void require_finite(std::span<const double> returns) {
    for (std::size_t i = 0; i < returns.size(); ++i) {
        if (!std::isfinite(returns[i])) {
            throw DataError("non-finite return at slot " + std::to_string(i + 1));
        }
    }
}

void require_probabilities(std::span<const double> alphas) {
    for (std::size_t l = 0; l < alphas.size(); ++l) {
        if (!(alphas[l] > 0.0 && alphas[l] < 1.0)) {
            throw ConfigError("probability " + std::to_string(alphas[l]) + " outside (0,1)");
        }
        if (l > 0 && !(alphas[l] > alphas[l - 1])) {
            throw ConfigError("probabilities must be strictly increasing");
        }
    }
}

void require_increasing(std::span<const double> thresholds) {
    for (std::size_t l = 1; l < thresholds.size(); ++l) {
        if (!(thresholds[l] > thresholds[l - 1])) {
            throw ConfigError("thresholds must be strictly increasing");
        }
    }
}

std::size_t count_below(std::span<const double> thresholds, double r) {
    // number of c with c < r, i.e. the 0-based index of the (c_{l-1}, c_l] bin
    return static_cast<std::size_t>(
        std::lower_bound(thresholds.begin(), thresholds.end(), r) - thresholds.begin());
}

double median_in_place(std::vector<double>& values) {
    const std::size_t n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2 == 1) {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

} // namespace

IntradayPanel::IntradayPanel(std::string asset_id, std::size_t grid_size)
    : asset_id_(std::move(asset_id)), grid_size_(grid_size) {
    if (grid_size_ == 0) {
        throw ConfigError("intraday grid size must be positive");
    }
}

void IntradayPanel::add_day(std::string date, std::vector<double> returns) {
    if (returns.size() != grid_size_) {
        throw DataError("day " + date + " has " + std::to_string(returns.size()) +
                        " returns, expected " + std::to_string(grid_size_));
    }
    if (!days_.empty() && !(days_.back().date < date)) {
        throw DataError("day " + date + " does not follow " + days_.back().date);
    }
    require_finite(returns);
    days_.push_back({std::move(date), std::move(returns)});
}

std::vector<double> log_returns(std::span<const double> prices) {
    for (std::size_t i = 0; i < prices.size(); ++i) {
        if (!(prices[i] > 0.0) || !std::isfinite(prices[i])) {
            throw DataError("non-positive price at index " + std::to_string(i));
        }
    }
    std::vector<double> out;
    if (prices.size() < 2) {
        return out;
    }
    out.reserve(prices.size() - 1);
    for (std::size_t i = 1; i < prices.size(); ++i) {
        // log1p of the relative change avoids cancellation between two nearby logs
        out.push_back(std::log1p((prices[i] - prices[i - 1]) / prices[i - 1]));
    }
    return out;
}

double realized_variance(std::span<const double> returns) {
    if (returns.empty()) {
        throw DataError("realized variance of an empty return vector");
    }
    detail::CompensatedSum rv;
    for (double r : returns) {
        rv.add(r * r);
    }
    return rv.value();
}

Semivariances semivariances(std::span<const double> returns) {
    detail::CompensatedSum pos;
    detail::CompensatedSum neg;
    for (double r : returns) {
        (r >= 0.0 ? pos : neg).add(r * r);
    }
    return {pos.value(), neg.value()};
}

double empirical_quantile(std::span<const double> sorted, double tau) {
    if (sorted.empty()) {
        throw DataError("quantile of an empty sample");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw ConfigError("quantile level outside [0,1]");
    }
    const double pos = tau * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size() || frac == 0.0) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> standardized_returns(std::span<const double> returns) {
    const double rv = realized_variance(returns);
    std::vector<double> z(returns.size(), 0.0);
    if (rv == 0.0) {
        return z;
    }
    const double scale = std::sqrt(rv / static_cast<double>(returns.size()));
    std::transform(returns.begin(), returns.end(), z.begin(),
                   [scale](double r) { return r / scale; });
    return z;
}

std::vector<double> partial_variance_thresholds(std::span<const double> returns,
                                                std::span<const double> alphas) {
    require_probabilities(alphas);
    const double rv = realized_variance(returns);
    std::vector<double> thresholds(alphas.size(), 0.0);
    if (rv == 0.0) {
        return thresholds;
    }
    const double scale = std::sqrt(rv / static_cast<double>(returns.size()));
    std::vector<double> z = standardized_returns(returns);
    std::sort(z.begin(), z.end());
    for (std::size_t l = 0; l < alphas.size(); ++l) {
        thresholds[l] = scale * empirical_quantile(z, alphas[l]);
    }
    return thresholds;
}

std::vector<double> partial_variances(std::span<const double> returns,
                                      std::span<const double> alphas) {
    require_finite(returns);
    return binned_decomposition(returns, ReturnBinning::day_quantiles(returns, alphas));
}

std::vector<double> threshold_decomposition(std::span<const double> returns,
                                            std::span<const double> thresholds) {
    return binned_decomposition(
        returns, ReturnBinning::fixed(std::vector<double>(thresholds.begin(), thresholds.end())));
}

std::vector<double> temporal_decomposition(std::span<const double> returns,
                                           std::size_t segment_length) {
    if (segment_length == 0 || returns.empty() || returns.size() % segment_length != 0) {
        throw ConfigError("segment length " + std::to_string(segment_length) +
                          " does not divide grid size " + std::to_string(returns.size()));
    }
    std::vector<detail::CompensatedSum> w(returns.size() / segment_length);
    for (std::size_t i = 0; i < returns.size(); ++i) {
        w[i / segment_length].add(returns[i] * returns[i]);
    }
    return detail::values_of(w);
}

ReturnBinning ReturnBinning::sign_split() {
    return ReturnBinning{};
}

ReturnBinning ReturnBinning::fixed(std::vector<double> thresholds) {
    require_increasing(thresholds);
    ReturnBinning b;
    b.mode_ = Mode::Fixed;
    b.bins_ = thresholds.size() + 1;
    b.thresholds_ = std::move(thresholds);
    return b;
}

ReturnBinning ReturnBinning::day_quantiles(std::span<const double> returns,
                                           std::span<const double> alphas) {
    require_probabilities(alphas);
    ReturnBinning b;
    b.mode_ = Mode::Scaled;
    b.bins_ = alphas.size() + 1;
    const double rv = realized_variance(returns);
    // Classification happens on z_i = r_i / scale so that a return sitting
    // exactly on an order statistic is compared against itself.
    b.scale_ = rv > 0.0 ? std::sqrt(rv / static_cast<double>(returns.size())) : 1.0;
    std::vector<double> z = standardized_returns(returns);
    std::sort(z.begin(), z.end());
    b.thresholds_.reserve(alphas.size());
    for (double a : alphas) {
        b.thresholds_.push_back(rv > 0.0 ? empirical_quantile(z, a) : 0.0);
    }
    return b;
}

ReturnBinning ReturnBinning::per_slot(Eigen::MatrixXd thresholds) {
    for (Eigen::Index i = 0; i < thresholds.rows(); ++i) {
        for (Eigen::Index j = 1; j < thresholds.cols(); ++j) {
            if (!(thresholds(i, j) >= thresholds(i, j - 1))) {
                throw ConfigError("slot thresholds must be non-decreasing (slot " +
                                  std::to_string(i + 1) + ")");
            }
        }
    }
    ReturnBinning b;
    b.mode_ = Mode::PerSlot;
    b.bins_ = static_cast<std::size_t>(thresholds.cols()) + 1;
    b.slot_thresholds_ = std::move(thresholds);
    return b;
}

std::size_t ReturnBinning::bin_of(std::size_t slot, double r) const {
    switch (mode_) {
    case Mode::Sign:
        return r >= 0.0 ? 1 : 0;
    case Mode::Fixed:
        return count_below(thresholds_, r);
    case Mode::Scaled:
        return count_below(thresholds_, r / scale_);
    case Mode::PerSlot: {
        if (slot >= static_cast<std::size_t>(slot_thresholds_.rows())) {
            throw ConfigError("slot " + std::to_string(slot + 1) + " outside threshold schedule");
        }
        std::size_t bin = 0;
        const auto row = slot_thresholds_.row(static_cast<Eigen::Index>(slot));
        while (bin < static_cast<std::size_t>(row.size()) &&
               row(static_cast<Eigen::Index>(bin)) < r) {
            ++bin;
        }
        return bin;
    }
    }
    return 0;
}

std::vector<double> binned_decomposition(std::span<const double> returns,
                                         const ReturnBinning& binning) {
    std::vector<detail::CompensatedSum> out(binning.bins());
    for (std::size_t i = 0; i < returns.size(); ++i) {
        out[binning.bin_of(i, returns[i])].add(returns[i] * returns[i]);
    }
    return detail::values_of(out);
}

std::vector<double> ComponentGrid::bin_totals() const {
    std::vector<detail::CompensatedSum> out(bins);
    for (std::size_t l = 0; l < bins; ++l) {
        for (std::size_t k = 0; k < segments; ++k) {
            out[l].add(at(l, k));
        }
    }
    return detail::values_of(out);
}

std::vector<double> ComponentGrid::segment_totals() const {
    std::vector<detail::CompensatedSum> out(segments);
    for (std::size_t l = 0; l < bins; ++l) {
        for (std::size_t k = 0; k < segments; ++k) {
            out[k].add(at(l, k));
        }
    }
    return detail::values_of(out);
}

double ComponentGrid::total() const {
    detail::CompensatedSum sum;
    for (double v : values) {
        sum.add(v);
    }
    return sum.value();
}

ComponentGrid combined_decomposition(std::span<const double> returns,
                                     const ReturnBinning& binning,
                                     std::size_t segment_length) {
    if (segment_length == 0 || returns.empty() || returns.size() % segment_length != 0) {
        throw ConfigError("segment length " + std::to_string(segment_length) +
                          " does not divide grid size " + std::to_string(returns.size()));
    }
    ComponentGrid grid;
    grid.bins = binning.bins();
    grid.segments = returns.size() / segment_length;
    std::vector<detail::CompensatedSum> cells(grid.bins * grid.segments);
    for (std::size_t i = 0; i < returns.size(); ++i) {
        const std::size_t l = binning.bin_of(i, returns[i]);
        cells[l * grid.segments + i / segment_length].add(returns[i] * returns[i]);
    }
    grid.values = detail::values_of(cells);
    return grid;
}

PeriodicityProfile estimate_periodicity(const IntradayPanel& panel) {
    constexpr std::size_t kMinDays = 50;
    if (panel.size() < kMinDays) {
        throw DataError("periodicity estimation needs at least 50 days, panel has " +
                        std::to_string(panel.size()));
    }
    const std::size_t n = panel.grid_size();
    PeriodicityProfile profile;
    profile.sigma.resize(n);
    std::vector<double> column(panel.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < panel.size(); ++t) {
            column[t] = std::abs(panel[t].returns[i]);
        }
        const double scale = 1.4826 * median_in_place(column);
        if (!(scale > 0.0)) {
            throw DataError("periodicity: slot " + std::to_string(i + 1) +
                            " has zero median absolute return across days");
        }
        profile.sigma[i] = scale;
    }
    double mean_sq = 0.0;
    for (double s : profile.sigma) {
        mean_sq += s * s;
    }
    mean_sq /= static_cast<double>(n);
    const double norm = std::sqrt(mean_sq);
    for (double& s : profile.sigma) {
        s /= norm;
    }
    return profile;
}

std::vector<double> filter_periodicity(std::span<const double> returns,
                                       const PeriodicityProfile& profile) {
    if (profile.sigma.size() != returns.size()) {
        throw ConfigError("periodicity profile has " + std::to_string(profile.sigma.size()) +
                          " slots, day has " + std::to_string(returns.size()));
    }
    std::vector<double> out(returns.size());
    for (std::size_t i = 0; i < returns.size(); ++i) {
        out[i] = returns[i] / profile.sigma[i];
    }
    return out;
}

double bipower_variation(std::span<const double> filtered_returns) {
    const std::size_t n = filtered_returns.size();
    if (n < 2) {
        throw DataError("bi-power variation needs at least two returns");
    }
    double sum = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        sum += std::abs(filtered_returns[i]) * std::abs(filtered_returns[i - 1]);
    }
    const double nd = static_cast<double>(n);
    return 0.5 * std::numbers::pi * (nd / (nd - 1.0)) * sum;
}

Eigen::MatrixXd pv_star_thresholds(const PeriodicityProfile& profile, double bpv,
                                   std::size_t grid_size, std::span<const double> taus) {
    if (!(bpv >= 0.0)) {
        throw DataError("bi-power variation must be non-negative");
    }
    if (grid_size == 0 || profile.sigma.size() != grid_size) {
        throw ConfigError("periodicity profile does not match the grid size");
    }
    require_probabilities(taus);
    const double day_scale = std::sqrt(bpv / static_cast<double>(grid_size));
    Eigen::MatrixXd c(static_cast<Eigen::Index>(grid_size), static_cast<Eigen::Index>(taus.size()));
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const double zq = normal_quantile(taus[j]);
        for (std::size_t i = 0; i < grid_size; ++i) {
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                profile.sigma[i] * day_scale * zq;
        }
    }
    return c;
}

ReturnBinning pv_star_binning(std::span<const double> returns,
                              const PeriodicityProfile& profile,
                              std::span<const double> taus) {
    const std::vector<double> filtered = filter_periodicity(returns, profile);
    const double bpv = bipower_variation(filtered);
    return ReturnBinning::per_slot(pv_star_thresholds(profile, bpv, returns.size(), taus));
}

void DecompositionSpec::validate(std::size_t grid_size) const {
    auto check_segments = [&] {
        if (segment_length == 0 || grid_size % segment_length != 0) {
            throw ConfigError("segment length " + std::to_string(segment_length) +
                              " does not divide grid size " + std::to_string(grid_size));
        }
    };
    auto check_partition = [&](DecompositionKind k) {
        switch (k) {
        case DecompositionKind::Pv:
        case DecompositionKind::PvStar:
            require_probabilities(probabilities);
            break;
        case DecompositionKind::Threshold:
            require_increasing(thresholds);
            break;
        case DecompositionKind::Sv:
            break;
        default:
            throw ConfigError("combined decomposition must cross time with SV, PV, "
                              "threshold or PV-star bins");
        }
    };
    switch (kind) {
    case DecompositionKind::Rv:
    case DecompositionKind::Sv:
        break;
    case DecompositionKind::Pv:
    case DecompositionKind::PvStar:
    case DecompositionKind::Threshold:
        check_partition(kind);
        break;
    case DecompositionKind::Temporal:
        check_segments();
        break;
    case DecompositionKind::Combined:
        check_segments();
        check_partition(cross);
        break;
    }
}

std::vector<std::string> component_labels(const DecompositionSpec& spec, std::size_t grid_size) {
    auto value_labels = [&](DecompositionKind k) {
        std::vector<std::string> out;
        switch (k) {
        case DecompositionKind::Sv:
            out = {"SV-", "SV+"};
            break;
        case DecompositionKind::Pv:
        case DecompositionKind::PvStar:
            for (std::size_t l = 1; l <= spec.probabilities.size() + 1; ++l) {
                out.push_back("PV" + std::to_string(l));
            }
            break;
        case DecompositionKind::Threshold:
            for (std::size_t l = 1; l <= spec.thresholds.size() + 1; ++l) {
                out.push_back("Z" + std::to_string(l));
            }
            break;
        default:
            break;
        }
        return out;
    };
    auto time_labels = [&] {
        std::vector<std::string> out;
        for (std::size_t k = 1; k <= grid_size / spec.segment_length; ++k) {
            out.push_back("T" + std::to_string(k));
        }
        return out;
    };
    switch (spec.kind) {
    case DecompositionKind::Rv:
        return {"RV"};
    case DecompositionKind::Temporal:
        return time_labels();
    case DecompositionKind::Combined: {
        std::vector<std::string> out;
        for (const auto& v : value_labels(spec.cross)) {
            for (const auto& t : time_labels()) {
                out.push_back(t + v);
            }
        }
        return out;
    }
    default:
        return value_labels(spec.kind);
    }
}

DailyMeasures decompose(std::string date, std::span<const double> returns,
                        const DecompositionSpec& spec, const PeriodicityProfile* profile) {
    spec.validate(returns.size());
    require_finite(returns);

    DailyMeasures out;
    out.date = std::move(date);
    out.rv = realized_variance(returns);
    out.labels = component_labels(spec, returns.size());

    auto binning_for = [&](DecompositionKind k) -> ReturnBinning {
        switch (k) {
        case DecompositionKind::Sv:
            return ReturnBinning::sign_split();
        case DecompositionKind::Pv:
            return ReturnBinning::day_quantiles(returns, spec.probabilities);
        case DecompositionKind::Threshold:
            return ReturnBinning::fixed(spec.thresholds);
        case DecompositionKind::PvStar:
            if (profile == nullptr) {
                throw ConfigError("PV-star decomposition requires a periodicity profile");
            }
            return pv_star_binning(returns, *profile, spec.probabilities);
        default:
            throw ConfigError("decomposition kind has no value partition");
        }
    };

    switch (spec.kind) {
    case DecompositionKind::Rv:
        out.components = {out.rv};
        break;
    case DecompositionKind::Temporal:
        out.components = temporal_decomposition(returns, spec.segment_length);
        break;
    case DecompositionKind::Combined:
        out.components =
            combined_decomposition(returns, binning_for(spec.cross), spec.segment_length).values;
        break;
    default:
        out.components = binned_decomposition(returns, binning_for(spec.kind));
        break;
    }
    return out;
}

} // namespace rvrecon
