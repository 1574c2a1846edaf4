#include "rvrecon/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <string>

#include "rvrecon/distributions.hpp"
#include "rvrecon/error.hpp"
#include "rvrecon/random.hpp"

namespace rvrecon {
namespace {

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ConfigError("series lengths differ: " + std::to_string(a) + " vs " +
                          std::to_string(b));
    }
}

// Column means of `losses` under each resample; result is k x n_boot.
Eigen::MatrixXd bootstrap_means(const Eigen::MatrixXd& losses, const McsOptions& options) {
    const auto t = static_cast<std::size_t>(losses.rows());
    const auto k = losses.cols();
    const auto b = static_cast<Eigen::Index>(options.n_boot);
    Eigen::MatrixXd out(k, b);
    const Eigen::MatrixXd rows = losses.transpose();  // k x T, contiguous per day

    auto work = [&](Eigen::Index from, Eigen::Index to) {
        Eigen::VectorXd acc(k);
        for (Eigen::Index r = from; r < to; ++r) {
            const auto idx = stationary_bootstrap_indices(
                t, options.block_length, derive_seed(options.seed, static_cast<std::uint64_t>(r)));
            acc.setZero();
            for (const auto i : idx) {
                acc += rows.col(static_cast<Eigen::Index>(i));
            }
            out.col(r) = acc / static_cast<double>(t);
        }
    };

    const auto jobs = static_cast<Eigen::Index>(std::max<std::size_t>(1, options.jobs));
    if (jobs == 1) {
        work(0, b);
        return out;
    }
    std::vector<std::future<void>> tasks;
    const Eigen::Index chunk = (b + jobs - 1) / jobs;
    for (Eigen::Index from = 0; from < b; from += chunk) {
        tasks.push_back(std::async(std::launch::async, work, from, std::min(b, from + chunk)));
    }
    for (auto& task : tasks) {
        task.get();
    }
    return out;
}

double studentize(double num, double var) {
    if (var > 0.0) {
        return num / std::sqrt(var);
    }
    if (num == 0.0) {
        return 0.0;
    }
    return num > 0.0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
}

struct StepOutcome {
    double p_value = 1.0;
    std::size_t worst = 0;  // position within `alive`
};

StepOutcome mcs_step(const Eigen::VectorXd& means, const Eigen::MatrixXd& boot,
                     const std::vector<std::size_t>& alive, McsStatistic statistic) {
    const std::size_t m = alive.size();
    const auto b = boot.cols();
    const double bd = static_cast<double>(b);

    // dbar_i. = L_i - average over the set; bootstrap analogues likewise.
    Eigen::VectorXd dbar(static_cast<Eigen::Index>(m));
    Eigen::MatrixXd dstar(static_cast<Eigen::Index>(m), b);
    double avg = 0.0;
    Eigen::RowVectorXd avg_star = Eigen::RowVectorXd::Zero(b);
    for (std::size_t i = 0; i < m; ++i) {
        avg += means(static_cast<Eigen::Index>(alive[i]));
        avg_star += boot.row(static_cast<Eigen::Index>(alive[i]));
    }
    avg /= static_cast<double>(m);
    avg_star /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        dbar(r) = means(static_cast<Eigen::Index>(alive[i])) - avg;
        // recentred bootstrap deviations
        dstar.row(r) = boot.row(static_cast<Eigen::Index>(alive[i])) - avg_star;
        dstar.row(r).array() -= dbar(r);
    }
    Eigen::VectorXd var_i = dstar.array().square().rowwise().sum() / bd;

    StepOutcome out;
    Eigen::VectorXd t_i(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        t_i(static_cast<Eigen::Index>(i)) =
            studentize(dbar(static_cast<Eigen::Index>(i)), var_i(static_cast<Eigen::Index>(i)));
    }
    Eigen::Index worst = 0;
    t_i.maxCoeff(&worst);
    out.worst = static_cast<std::size_t>(worst);

    double observed = 0.0;
    Eigen::RowVectorXd star = Eigen::RowVectorXd::Zero(b);
    if (statistic == McsStatistic::Max) {
        observed = t_i.maxCoeff();
        star.setConstant(-std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < m; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double v = var_i(r);
            for (Eigen::Index c = 0; c < b; ++c) {
                const double s = v > 0.0 ? dstar(r, c) / std::sqrt(v) : 0.0;
                star(c) = std::max(star(c), s);
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const auto ai = static_cast<Eigen::Index>(alive[i]);
                const auto aj = static_cast<Eigen::Index>(alive[j]);
                const double d = means(ai) - means(aj);
                const Eigen::RowVectorXd centred = (boot.row(ai) - boot.row(aj)).array() - d;
                const double v = centred.squaredNorm() / bd;
                observed = std::max(observed, std::abs(studentize(d, v)));
                if (v > 0.0) {
                    star = star.cwiseMax(centred.cwiseAbs() / std::sqrt(v));
                }
            }
        }
    }
    const auto exceed = (star.array() >= observed).count();
    out.p_value = static_cast<double>(exceed) / bd;
    return out;
}

} // namespace

std::string_view loss_kind_name(LossKind kind) {
    return kind == LossKind::Mse ? "MSE" : "QLIKE";
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "MSE" || name == "mse") return LossKind::Mse;
    if (name == "QLIKE" || name == "qlike") return LossKind::Qlike;
    throw ConfigError("unknown loss '" + std::string(name) + "'; valid: MSE, QLIKE");
}

QlikeMode parse_qlike_mode(std::string_view name) {
    if (name == "standard") return QlikeMode::Standard;
    if (name == "literal") return QlikeMode::Literal;
    throw ConfigError("unknown QLIKE mode '" + std::string(name) + "'; valid: standard, literal");
}

double squared_error(double actual, double forecast) {
    const double e = forecast - actual;
    return e * e;
}

double qlike(double actual, double forecast, QlikeMode mode) {
    const double ratio = actual / forecast;
    if (mode == QlikeMode::Literal) {
        return ratio - std::log(actual) / std::log(forecast) - 1.0;
    }
    return ratio - std::log(ratio) - 1.0;
}

std::vector<double> loss_series(std::span<const double> actual, std::span<const double> forecast,
                                LossKind kind, QlikeMode mode) {
    require_same_length(actual.size(), forecast.size());
    std::vector<double> out(actual.size());
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (kind == LossKind::Mse) {
            out[t] = squared_error(actual[t], forecast[t]);
            continue;
        }
        if (!(actual[t] > 0.0)) {
            throw DataError("QLIKE needs positive actuals; entry " + std::to_string(t) + " is " +
                            std::to_string(actual[t]));
        }
        if (!(forecast[t] > 0.0)) {
            throw DataError("QLIKE needs positive forecasts; entry " + std::to_string(t) +
                            " is " + std::to_string(forecast[t]) + " (floor it first)");
        }
        out[t] = qlike(actual[t], forecast[t], mode);
        if (!std::isfinite(out[t])) {
            throw NumericalError("non-finite QLIKE at entry " + std::to_string(t));
        }
    }
    return out;
}

double mean(std::span<const double> x) {
    if (x.empty()) {
        throw DataError("mean of an empty series");
    }
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double loss_ratio(double model_mean, double benchmark_mean) {
    if (!(benchmark_mean > 0.0)) {
        throw DataError("benchmark loss must be positive, got " + std::to_string(benchmark_mean));
    }
    return model_mean / benchmark_mean;
}

double loss_ratio(std::span<const double> model_loss, std::span<const double> benchmark_loss) {
    require_same_length(model_loss.size(), benchmark_loss.size());
    return loss_ratio(mean(model_loss), mean(benchmark_loss));
}

double geo_mean_ratio(std::span<const double> ratios) {
    if (ratios.empty()) {
        throw DataError("geometric mean of no ratios");
    }
    double acc = 0.0;
    for (const double r : ratios) {
        if (!(r > 0.0)) {
            throw DataError("loss ratios must be positive, got " + std::to_string(r));
        }
        acc += std::log(r);
    }
    return std::exp(acc / static_cast<double>(ratios.size()));
}

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b,
                 std::size_t horizon) {
    require_same_length(loss_a.size(), loss_b.size());
    const std::size_t n = loss_a.size();
    if (n < 30) {
        throw DataError("DM test needs at least 30 observations, got " + std::to_string(n));
    }
    if (horizon == 0) {
        throw ConfigError("forecast horizon must be at least 1");
    }
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) {
        d[t] = loss_a[t] - loss_b[t];
    }
    const double dbar = mean(d);
    const double nd = static_cast<double>(n);
    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t t = lag; t < n; ++t) {
            s += (d[t] - dbar) * (d[t - lag] - dbar);
        }
        return s / nd;
    };
    double lrv = autocov(0);
    for (std::size_t lag = 1; lag < horizon && lag < n; ++lag) {
        const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(horizon);
        lrv += 2.0 * w * autocov(lag);
    }

    DmResult out;
    if (!(lrv > 0.0)) {
        if (dbar == 0.0) {
            return out;
        }
        out.statistic = dbar > 0.0 ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
        out.p_value = dbar > 0.0 ? 1.0 : 0.0;
        return out;
    }
    out.statistic = dbar / std::sqrt(lrv / nd);
    out.p_value = normal_cdf(out.statistic);
    return out;
}

std::vector<std::size_t> stationary_bootstrap_indices(std::size_t length,
                                                      double expected_block_length,
                                                      std::uint64_t seed) {
    if (length == 0) {
        throw ConfigError("bootstrap length must be at least 1");
    }
    if (!(expected_block_length >= 1.0)) {
        throw ConfigError("expected block length must be at least 1");
    }
    const double restart = 1.0 / expected_block_length;
    Rng rng(seed);
    std::vector<std::size_t> idx(length);
    idx[0] = rng.index(length);
    for (std::size_t i = 1; i < length; ++i) {
        if (rng.uniform() < restart) {
            idx[i] = rng.index(length);
        } else {
            idx[i] = idx[i - 1] + 1 == length ? 0 : idx[i - 1] + 1;
        }
    }
    return idx;
}

McsStatistic parse_mcs_statistic(std::string_view name) {
    if (name == "range" || name == "T_R" || name == "TR") return McsStatistic::Range;
    if (name == "max" || name == "T_max" || name == "TMAX") return McsStatistic::Max;
    throw ConfigError("unknown MCS statistic '" + std::string(name) + "'; valid: range, max");
}

McsResult mcs(const Eigen::MatrixXd& losses, const McsOptions& options) {
    const auto t = losses.rows();
    const auto k = static_cast<std::size_t>(losses.cols());
    if (k < 2) {
        throw ConfigError("MCS needs at least 2 models");
    }
    if (t < 50) {
        throw DataError("MCS needs at least 50 observations, got " + std::to_string(t));
    }
    if (options.n_boot < 100) {
        throw ConfigError("MCS needs at least 100 bootstrap resamples, got " +
                          std::to_string(options.n_boot));
    }
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
        throw ConfigError("MCS alpha must lie in (0, 1)");
    }
    if (!losses.allFinite()) {
        throw DataError("loss matrix contains non-finite entries");
    }

    const Eigen::VectorXd means = losses.colwise().mean().transpose();
    const Eigen::MatrixXd boot = bootstrap_means(losses, options);

    McsResult out;
    out.p_values.assign(k, 1.0);
    out.included.assign(k, false);
    std::vector<std::size_t> alive(k);
    std::iota(alive.begin(), alive.end(), std::size_t{0});
    double running = 0.0;
    while (alive.size() > 1) {
        const auto step = mcs_step(means, boot, alive, options.statistic);
        running = std::max(running, step.p_value);
        const std::size_t removed = alive[step.worst];
        out.p_values[removed] = running;
        out.elimination_order.push_back(removed);
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(step.worst));
    }
    out.p_values[alive.front()] = 1.0;
    out.elimination_order.push_back(alive.front());
    for (std::size_t i = 0; i < k; ++i) {
        out.included[i] = out.p_values[i] >= options.alpha;
    }
    return out;
}

NemenyiResult mcb_nemenyi(const Eigen::MatrixXd& losses, double alpha) {
    const auto t = losses.rows();
    const auto k = losses.cols();
    if (k < 2) {
        throw ConfigError("Nemenyi comparison needs at least 2 models");
    }
    if (t < 10) {
        throw DataError("Nemenyi comparison needs at least 10 observations, got " +
                        std::to_string(t));
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("Nemenyi alpha must lie in (0, 1)");
    }
    Eigen::VectorXd rank_sum = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    for (Eigen::Index r = 0; r < t; ++r) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return losses(r, a) < losses(r, b);
        });
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i + 1;
            while (j < order.size() && losses(r, order[j]) == losses(r, order[i])) {
                ++j;
            }
            const double avg = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
            for (std::size_t m = i; m < j; ++m) {
                rank_sum(order[m]) += avg;
            }
            i = j;
        }
    }
    NemenyiResult out;
    const Eigen::VectorXd mean_ranks = rank_sum / static_cast<double>(t);
    out.mean_ranks.assign(mean_ranks.data(), mean_ranks.data() + k);
    const double kd = static_cast<double>(k);
    out.critical_value = 0.5 * studentized_range_quantile(1.0 - alpha, static_cast<std::size_t>(k));
    out.half_width =
        out.critical_value * std::sqrt(kd * (kd + 1.0) / (12.0 * static_cast<double>(t)));
    return out;
}

} // namespace rvrecon
