#include "rvrecon/distributions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "rvrecon/error.hpp"

namespace rvrecon {
namespace {

// qtukey(p, k, Inf) for k = 2..20.
constexpr std::array<double, 19> kRange95{
    2.771808, 3.314493, 3.633160, 3.857656, 4.030092, 4.169554, 4.286309,
    4.386509, 4.474124, 4.551864, 4.621655, 4.684920, 4.742732, 4.795924,
    4.845154, 4.890951, 4.933745, 4.973892, 5.011689};
constexpr std::array<double, 19> kRange90{
    2.326174, 2.902380, 3.240446, 3.478281, 3.660721, 3.808098, 3.931349,
    4.037023, 4.129346, 4.211200, 4.284635, 4.351158, 4.411913, 4.467782,
    4.519464, 4.567519, 4.612403, 4.654494, 4.694104};

double table_lookup(double p, std::size_t k) {
    if (k >= 2 && k <= 20) {
        if (std::abs(p - 0.95) < 1e-12) {
            return kRange95[k - 2];
        }
        if (std::abs(p - 0.90) < 1e-12) {
            return kRange90[k - 2];
        }
    }
    throw NumericalError("studentized range quantile unavailable for p=" + std::to_string(p) +
                         ", k=" + std::to_string(k));
}

} // namespace

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("normal quantile requires p in (0,1), got " + std::to_string(p));
    }
    return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

double studentized_range_cdf(double q, std::size_t k) {
    if (k < 2) {
        throw ConfigError("studentized range needs k >= 2");
    }
    if (q <= 0.0) {
        return 0.0;
    }
    const double km1 = static_cast<double>(k - 1);
    auto integrand = [q, km1](double z) {
        const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        const double width = normal_cdf(z) - normal_cdf(z - q);
        return phi * std::pow(width, km1);
    };
    using Quadrature = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double inf = std::numeric_limits<double>::infinity();
    const double value = Quadrature::integrate(integrand, -inf, inf, 15, 1e-12);
    return std::min(1.0, static_cast<double>(k) * value);
}

double studentized_range_quantile(double p, std::size_t k) {
    if (!(p > 0.0 && p < 1.0) || k < 2) {
        throw ConfigError("studentized range quantile requires p in (0,1) and k >= 2");
    }
    try {
        auto f = [p, k](double q) { return studentized_range_cdf(q, k) - p; };
        boost::math::tools::eps_tolerance<double> tol(40);
        std::uintmax_t iterations = 200;
        const auto [lo, hi] = boost::math::tools::toms748_solve(f, 1e-6, 40.0, tol, iterations);
        const double root = 0.5 * (lo + hi);
        if (!std::isfinite(root) || iterations >= 200) {
            return table_lookup(p, k);
        }
        return root;
    } catch (const boost::math::evaluation_error&) {
        return table_lookup(p, k);
    } catch (const std::domain_error&) {
        return table_lookup(p, k);
    }
}

} // namespace rvrecon
