#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rvrecon/rv_core.hpp"

namespace rvrecon {

/**
 * One of the catalog hierarchies/groupings of daily RV.
 *
 * Rows of y are ordered upper block first (RV, then value-type nodes, then
 * temporal nodes) followed by the bottom block (value-major, time-minor,
 * e.g. T1SV-, ..., T5SV-, T1SV+, ..., T5SV+).
 *
 *   S = [A; I_nb],  C = [I_na | -A],  C S = 0.
 */
struct HierarchyStructure {
    std::string name;
    Eigen::MatrixXi aggregation;  // n_a x n_b, entries 0/1
    Eigen::MatrixXd structural;   // n x n_b
    Eigen::MatrixXd constraints;  // n_a x n
    std::vector<std::string> labels;
    /// Decomposition whose components are the bottom series, in label order.
    DecompositionSpec bottom_spec;

    [[nodiscard]] std::size_t n_upper() const noexcept {
        return static_cast<std::size_t>(aggregation.rows());
    }
    [[nodiscard]] std::size_t n_bottom() const noexcept {
        return static_cast<std::size_t>(aggregation.cols());
    }
    [[nodiscard]] std::size_t size() const noexcept { return n_upper() + n_bottom(); }

    [[nodiscard]] std::span<const std::string> upper_labels() const {
        return std::span(labels).first(n_upper());
    }
    [[nodiscard]] std::span<const std::string> bottom_labels() const {
        return std::span(labels).subspan(n_upper());
    }
    /// Position of `label` in the node ordering; throws ConfigError if absent.
    [[nodiscard]] std::size_t index_of(std::string_view label) const;

    [[nodiscard]] Eigen::MatrixXi structural_int() const;
    [[nodiscard]] Eigen::MatrixXi constraints_int() const;
};

/// ST, SSV, STSV, SV-T, T-SV, CTSV, SPV3, STPV3, PV3-T, T-PV3, CTPV3.
const std::vector<std::string>& catalog_names();

/// Builds a catalog structure. `alphas` sets the PV bottom partition
/// (p = alphas.size() + 1 must be 3 for the PV3 names); `use_pv_star`
/// swaps the empirical quantile thresholds for the theoretical ones.
/// Throws ConfigError listing valid names on an unknown name.
HierarchyStructure build_hierarchy(std::string_view name,
                                   std::span<const double> alphas = kDefaultAlphas,
                                   std::size_t segment_length = kDefaultSegmentLength,
                                   std::size_t grid_size = kDefaultGridSize,
                                   bool use_pv_star = false);

/// ||C y||_inf; throws ConfigError on a dimension mismatch.
double coherence_residual(std::span<const double> y, const HierarchyStructure& h);

/// Coherent daily series, one column per node in h.labels order.
struct NodeSeriesSet {
    HierarchyStructure hierarchy;
    std::vector<std::string> dates;
    Eigen::MatrixXd values;  // T x n

    [[nodiscard]] std::vector<double> column(std::string_view label) const;
};

/// y_t = S b_t for every day. Measures must carry the bottom labels in
/// order; the first mismatch raises DataError.
NodeSeriesSet assemble_node_series(std::span<const DailyMeasures> measures,
                                   const HierarchyStructure& h);

/// Decompose every day of a panel into the bottom series of h and
/// aggregate. PV-star structures estimate the periodicity from the panel.
NodeSeriesSet node_series_from_panel(const IntradayPanel& panel, const HierarchyStructure& h);

} // namespace rvrecon
