#pragma once

#include <cstddef>

namespace rvrecon {

double normal_cdf(double x);

/// Standard normal quantile; p must lie in (0, 1).
double normal_quantile(double p);

/// CDF of the studentized range of k iid standard normals (infinite degrees
/// of freedom), evaluated by adaptive quadrature.
double studentized_range_cdf(double q, std::size_t k);

/// Upper quantile q with P(R <= q) = p for the studentized range of k means.
/// Falls back to a bundled table (k <= 20, p in {0.90, 0.95}) when the root
/// search does not converge.
double studentized_range_quantile(double p, std::size_t k);

} // namespace rvrecon
