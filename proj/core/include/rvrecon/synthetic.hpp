#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rvrecon/hierarchy.hpp"
#include "rvrecon/rv_core.hpp"

namespace rvrecon {

/// n consecutive weekdays starting at `start` (ISO date; moved forward to a
/// weekday if needed).
std::vector<std::string> business_dates(const std::string& start, std::size_t n);

/**
 * Intraday generator.
 *
 * Daily log variance l_t follows a HAR recursion around mean_log_variance
 * with daily/weekly/monthly loadings, a leverage term on the previous day's
 * downside share (2 SV-/RV - 1) and Gaussian shocks of size vol_of_vol.
 * Returns within a day are Gaussian with variance exp(l_t) / N scaled by a
 * U-shaped periodicity profile (mean square 1).
 */
struct IntradayDgp {
    double mean_log_variance = -9.2;  // daily variance around 1e-4
    double phi_daily = 0.35;
    double phi_weekly = 0.35;
    double phi_monthly = 0.2;
    double leverage = 0.4;
    double vol_of_vol = 0.35;
    double u_shape = 1.5;  // squared scale at the open/close relative to midday is 1 + u_shape
    std::size_t grid_size = kDefaultGridSize;
    std::size_t burn_in = 250;
    std::string start_date = "2003-01-02";
};

IntradayPanel synthetic_panel(std::uint64_t seed, std::size_t days, const std::string& asset_id,
                              const IntradayDgp& dgp = {});

/// The periodicity profile used by synthetic_panel.
std::vector<double> u_shaped_profile(std::size_t grid_size, double u_shape);

/**
 * Node-level generator: every bottom series is exp of a log-HAR process that
 * mixes a common persistent factor with a node-specific one (shock size
 * noise_scale); upper series are S times the bottoms, so every day is
 * coherent by construction.
 */
NodeSeriesSet synthetic_node_series(std::uint64_t seed, std::size_t days,
                                    const HierarchyStructure& h, double noise_scale = 0.3,
                                    const std::string& start_date = "2003-01-02");

} // namespace rvrecon
