#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rvrecon/random.hpp"

namespace rvrecon {

enum class LossKind { Mse, Qlike };

/**
 * Standard: y/f - log(y/f) - 1, zero only at f = y.
 * Literal: y/f - log(y)/log(f) - 1, the ratio-of-logs form. It is singular at
 * f = 1 and is not zero-minimized; kept for audits only.
 */
enum class QlikeMode { Standard, Literal };

std::string_view loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
QlikeMode parse_qlike_mode(std::string_view name);

double squared_error(double actual, double forecast);
double qlike(double actual, double forecast, QlikeMode mode = QlikeMode::Standard);

/// Pointwise losses. QLIKE needs strictly positive actuals (DataError) and
/// forecasts (DataError; floor them first).
std::vector<double> loss_series(std::span<const double> actual, std::span<const double> forecast,
                                LossKind kind, QlikeMode mode = QlikeMode::Standard);

double mean(std::span<const double> x);

/// mean(model) / mean(benchmark); a non-positive benchmark mean raises DataError.
double loss_ratio(std::span<const double> model_loss, std::span<const double> benchmark_loss);
double loss_ratio(double model_mean, double benchmark_mean);

/// exp(mean(log r)); every ratio must be positive.
double geo_mean_ratio(std::span<const double> ratios);

struct DmResult {
    double statistic = 0.0;
    /// P(Z <= stat): small values favour the first loss series.
    double p_value = 0.5;
};

/**
 * Diebold-Mariano test on d = a - b with a Bartlett HAC variance using h-1
 * lags. Needs equal lengths of at least 30. With a zero long-run variance the
 * statistic is 0 (p 0.5) for a zero mean and +-infinity (p 1 or 0) otherwise.
 */
DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b,
                 std::size_t horizon);

/**
 * Politis-Romano stationary bootstrap: block starts drawn uniformly, each
 * following index continues the block with probability 1 - 1/L, wrapping
 * circularly. Bit-reproducible for a given seed.
 */
std::vector<std::size_t> stationary_bootstrap_indices(std::size_t length,
                                                      double expected_block_length,
                                                      std::uint64_t seed);

enum class McsStatistic { Range, Max };

McsStatistic parse_mcs_statistic(std::string_view name);

struct McsOptions {
    double alpha = 0.2;
    std::size_t n_boot = 10000;
    double block_length = 22.0;
    McsStatistic statistic = McsStatistic::Range;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct McsResult {
    /// Monotonized p-values, one per loss column.
    std::vector<double> p_values;
    /// Column indices in the order they were removed; the last entry is the
    /// final survivor.
    std::vector<std::size_t> elimination_order;
    std::vector<bool> included;
};

/**
 * Model confidence set on a T x k loss matrix.
 *
 * One set of stationary-bootstrap resamples is drawn and reused for every
 * elimination step. Var(dbar_ij) is the bootstrap variance of the resampled
 * mean differentials. At each step the p-value is the share of recentred
 * bootstrap statistics at least as large as the observed one; the model with
 * the largest t_i. = dbar_i. / sd(dbar_i.) is removed. The sequence runs to
 * the end so every model gets a running-max p-value. Needs k >= 2, T >= 50
 * and n_boot >= 100.
 */
McsResult mcs(const Eigen::MatrixXd& losses, const McsOptions& options = {});

struct NemenyiResult {
    std::vector<double> mean_ranks;
    double half_width = 0.0;
    double critical_value = 0.0;  // q in half_width = q * sqrt(k(k+1)/(12T))
};

/**
 * Per-row ranks (1 = smallest loss, ties averaged), their column means and a
 * common interval half-width. Two models differ at level alpha when their
 * intervals are disjoint, which is the usual critical-difference test.
 * Needs k >= 2 and T >= 10.
 */
NemenyiResult mcb_nemenyi(const Eigen::MatrixXd& losses, double alpha = 0.05);

} // namespace rvrecon
