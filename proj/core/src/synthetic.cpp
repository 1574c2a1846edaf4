#include "rvrecon/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>

#include "rvrecon/error.hpp"
#include "rvrecon/random.hpp"

namespace rvrecon {
namespace {

std::chrono::sys_days parse_date(const std::string& iso) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (std::sscanf(iso.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
        throw ConfigError("cannot parse date '" + iso + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) {
        throw ConfigError("invalid date '" + iso + "'");
    }
    return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

bool weekend(std::chrono::sys_days day) {
    const std::chrono::weekday wd{day};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

// Rolling HAR state on a log scale: returns the conditional mean given the
// history so far (deviations from the long-run mean).
class HarRecursion {
public:
    HarRecursion(double daily, double weekly, double monthly)
        : daily_(daily), weekly_(weekly), monthly_(monthly), history_(22, 0.0) {}

    [[nodiscard]] double predict() const {
        double week = 0.0;
        double month = 0.0;
        for (std::size_t j = 0; j < 22; ++j) {
            const double v = history_[history_.size() - 1 - j];
            month += v;
            if (j < 5) {
                week += v;
            }
        }
        return daily_ * history_.back() + weekly_ * week / 5.0 + monthly_ * month / 22.0;
    }

    void push(double deviation) {
        history_.pop_front();
        history_.push_back(deviation);
    }

private:
    double daily_;
    double weekly_;
    double monthly_;
    std::deque<double> history_;
};

} // namespace

std::vector<std::string> business_dates(const std::string& start, std::size_t n) {
    auto day = parse_date(start);
    std::vector<std::string> out;
    out.reserve(n);
    while (out.size() < n) {
        if (!weekend(day)) {
            out.push_back(format_date(day));
        }
        day += std::chrono::days{1};
    }
    return out;
}

std::vector<double> u_shaped_profile(std::size_t grid_size, double u_shape) {
    std::vector<double> sigma(grid_size);
    const double mid = 0.5 * static_cast<double>(grid_size - 1);
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < grid_size; ++i) {
        const double x = mid > 0.0 ? (static_cast<double>(i) - mid) / mid : 0.0;
        sigma[i] = std::sqrt(1.0 + u_shape * x * x);
        mean_sq += sigma[i] * sigma[i];
    }
    mean_sq /= static_cast<double>(grid_size);
    for (auto& s : sigma) {
        s /= std::sqrt(mean_sq);
    }
    return sigma;
}

IntradayPanel synthetic_panel(std::uint64_t seed, std::size_t days, const std::string& asset_id,
                              const IntradayDgp& dgp) {
    if (dgp.phi_daily + dgp.phi_weekly + dgp.phi_monthly >= 1.0) {
        throw ConfigError("HAR loadings must sum to less than 1");
    }
    const std::size_t n = dgp.grid_size;
    const auto sigma = u_shaped_profile(n, dgp.u_shape);
    const auto dates = business_dates(dgp.start_date, days);
    Rng rng(seed);
    HarRecursion har(dgp.phi_daily, dgp.phi_weekly, dgp.phi_monthly);
    IntradayPanel panel(asset_id, n);
    double downside = 0.0;  // 2 SV-/RV - 1 of the previous day
    std::vector<double> returns(n);
    for (std::size_t t = 0; t < dgp.burn_in + days; ++t) {
        const double dev = har.predict() + dgp.leverage * downside + dgp.vol_of_vol * rng.normal();
        har.push(dev);
        const double slot_sd = std::sqrt(std::exp(dgp.mean_log_variance + dev) / static_cast<double>(n));
        double rv = 0.0;
        double neg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            returns[i] = slot_sd * sigma[i] * rng.normal();
            rv += returns[i] * returns[i];
            if (returns[i] < 0.0) {
                neg += returns[i] * returns[i];
            }
        }
        downside = rv > 0.0 ? 2.0 * neg / rv - 1.0 : 0.0;
        if (t >= dgp.burn_in) {
            panel.add_day(dates[t - dgp.burn_in], returns);
        }
    }
    return panel;
}

NodeSeriesSet synthetic_node_series(std::uint64_t seed, std::size_t days,
                                    const HierarchyStructure& h, double noise_scale,
                                    const std::string& start_date) {
    if (!(noise_scale >= 0.0)) {
        throw ConfigError("noise scale must be non-negative");
    }
    const std::size_t nb = h.n_bottom();
    const std::size_t burn_in = 250;
    Rng rng(seed);
    // Node mean levels split a daily variance of 1e-4 unevenly across bottoms.
    std::vector<double> level(nb);
    double total = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
        level[j] = 1.0 + 0.5 * static_cast<double>(j % 3);
        total += level[j];
    }
    HarRecursion common(0.35, 0.35, 0.2);
    std::vector<HarRecursion> own(nb, HarRecursion(0.3, 0.3, 0.2));

    NodeSeriesSet out;
    out.hierarchy = h;
    out.dates = business_dates(start_date, days);
    out.values.resize(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(h.size()));
    Eigen::VectorXd b(static_cast<Eigen::Index>(nb));
    for (std::size_t t = 0; t < burn_in + days; ++t) {
        const double f = common.predict() + 0.3 * rng.normal();
        common.push(f);
        for (std::size_t j = 0; j < nb; ++j) {
            const double e = own[j].predict() + noise_scale * rng.normal();
            own[j].push(e);
            b(static_cast<Eigen::Index>(j)) = 1e-4 * level[j] / total * std::exp(f + e);
        }
        if (t >= burn_in) {
            out.values.row(static_cast<Eigen::Index>(t - burn_in)) = (h.structural * b).transpose();
        }
    }
    return out;
}

} // namespace rvrecon
