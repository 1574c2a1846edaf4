#pragma once

#include <cmath>
#include <vector>

namespace rvrecon::detail {

// Neumaier summation. Keeps each partial sum within an ulp or two of the
// exact total, so a partition's parts add back to the whole tightly.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

inline std::vector<double> values_of(const std::vector<CompensatedSum>& sums) {
    std::vector<double> out;
    out.reserve(sums.size());
    for (const auto& s : sums) {
        out.push_back(s.value());
    }
    return out;
}

} // namespace rvrecon::detail
