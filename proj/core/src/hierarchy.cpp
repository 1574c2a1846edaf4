#include "rvrecon/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "rvrecon/error.hpp"

namespace rvrecon {
namespace {

enum class ValueSplit { None, Sign, Quantile };

struct Layout {
    ValueSplit split = ValueSplit::None;
    bool temporal = false;
    bool by_value = false;
    bool by_time = false;
};

std::optional<Layout> catalog_layout(std::string_view name) {
    // name -> (value split, temporal bottoms, value uppers, temporal uppers)
    if (name == "ST") return Layout{ValueSplit::None, true, false, false};
    if (name == "SSV") return Layout{ValueSplit::Sign, false, false, false};
    if (name == "STSV") return Layout{ValueSplit::Sign, true, false, false};
    if (name == "SV-T") return Layout{ValueSplit::Sign, true, true, false};
    if (name == "T-SV") return Layout{ValueSplit::Sign, true, false, true};
    if (name == "CTSV") return Layout{ValueSplit::Sign, true, true, true};
    if (name == "SPV3") return Layout{ValueSplit::Quantile, false, false, false};
    if (name == "STPV3") return Layout{ValueSplit::Quantile, true, false, false};
    if (name == "PV3-T") return Layout{ValueSplit::Quantile, true, true, false};
    if (name == "T-PV3") return Layout{ValueSplit::Quantile, true, false, true};
    if (name == "CTPV3") return Layout{ValueSplit::Quantile, true, true, true};
    return std::nullopt;
}

std::string normalize_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        if (c != '(' && c != ')') {
            out.push_back(c);
        }
    }
    return out;
}

} // namespace

const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names{"ST",   "SSV",   "STSV",  "SV-T",  "T-SV", "CTSV",
                                                "SPV3", "STPV3", "PV3-T", "T-PV3", "CTPV3"};
    return names;
}

std::size_t HierarchyStructure::index_of(std::string_view label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
        throw ConfigError("node '" + std::string(label) + "' not in hierarchy " + name);
    }
    return static_cast<std::size_t>(it - labels.begin());
}

Eigen::MatrixXi HierarchyStructure::structural_int() const {
    const auto na = aggregation.rows();
    const auto nb = aggregation.cols();
    Eigen::MatrixXi s(na + nb, nb);
    s << aggregation, Eigen::MatrixXi::Identity(nb, nb);
    return s;
}

Eigen::MatrixXi HierarchyStructure::constraints_int() const {
    const auto na = aggregation.rows();
    Eigen::MatrixXi c(na, na + aggregation.cols());
    c << Eigen::MatrixXi::Identity(na, na), -aggregation;
    return c;
}

HierarchyStructure build_hierarchy(std::string_view name, std::span<const double> alphas,
                                   std::size_t segment_length, std::size_t grid_size,
                                   bool use_pv_star) {
    const std::string key = normalize_name(name);
    const auto layout = catalog_layout(key);
    if (!layout) {
        std::string valid;
        for (const auto& n : catalog_names()) {
            valid += (valid.empty() ? "" : ", ") + n;
        }
        throw ConfigError("unknown hierarchy '" + std::string(name) + "'; valid names: " + valid);
    }

    HierarchyStructure h;
    h.name = key;

    DecompositionSpec spec;
    spec.segment_length = segment_length;
    spec.probabilities.assign(alphas.begin(), alphas.end());
    const DecompositionKind value_kind =
        layout->split == ValueSplit::Sign
            ? DecompositionKind::Sv
            : (use_pv_star ? DecompositionKind::PvStar : DecompositionKind::Pv);
    if (layout->split == ValueSplit::None) {
        spec.kind = DecompositionKind::Temporal;
    } else if (layout->temporal) {
        spec.kind = DecompositionKind::Combined;
        spec.cross = value_kind;
    } else {
        spec.kind = value_kind;
    }
    spec.validate(grid_size);
    h.bottom_spec = spec;

    DecompositionSpec value_spec = spec;
    value_spec.kind = value_kind;
    const std::vector<std::string> values =
        layout->split == ValueSplit::None ? std::vector<std::string>{}
                                          : component_labels(value_spec, grid_size);
    const std::size_t n_values = std::max<std::size_t>(values.size(), 1);
    const std::size_t n_segments = layout->temporal ? grid_size / segment_length : 1;
    const std::size_t nb = n_values * n_segments;

    std::vector<std::string> uppers{"RV"};
    if (layout->by_value) {
        uppers.insert(uppers.end(), values.begin(), values.end());
    }
    if (layout->by_time) {
        for (std::size_t k = 1; k <= n_segments; ++k) {
            uppers.push_back("T" + std::to_string(k));
        }
    }
    const std::size_t na = uppers.size();

    h.aggregation = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(nb));
    for (std::size_t l = 0; l < n_values; ++l) {
        for (std::size_t k = 0; k < n_segments; ++k) {
            const auto col = static_cast<Eigen::Index>(l * n_segments + k);
            Eigen::Index row = 0;
            h.aggregation(row++, col) = 1;
            if (layout->by_value) {
                h.aggregation(row + static_cast<Eigen::Index>(l), col) = 1;
                row += static_cast<Eigen::Index>(values.size());
            }
            if (layout->by_time) {
                h.aggregation(row + static_cast<Eigen::Index>(k), col) = 1;
            }
        }
    }

    h.labels = uppers;
    h.labels.reserve(na + nb);
    if (layout->split == ValueSplit::None) {
        for (std::size_t k = 1; k <= n_segments; ++k) {
            h.labels.push_back("T" + std::to_string(k));
        }
    } else if (!layout->temporal) {
        h.labels.insert(h.labels.end(), values.begin(), values.end());
    } else {
        for (const auto& v : values) {
            for (std::size_t k = 1; k <= n_segments; ++k) {
                h.labels.push_back("T" + std::to_string(k) + v);
            }
        }
    }

    h.structural = h.structural_int().cast<double>();
    h.constraints = h.constraints_int().cast<double>();
    return h;
}

double coherence_residual(std::span<const double> y, const HierarchyStructure& h) {
    if (y.size() != h.size()) {
        throw ConfigError("vector of length " + std::to_string(y.size()) +
                          " does not match hierarchy " + h.name + " (n=" +
                          std::to_string(h.size()) + ")");
    }
    const Eigen::Map<const Eigen::VectorXd> v(y.data(), static_cast<Eigen::Index>(y.size()));
    return (h.constraints * v).cwiseAbs().maxCoeff();
}

std::vector<double> NodeSeriesSet::column(std::string_view label) const {
    const auto j = static_cast<Eigen::Index>(hierarchy.index_of(label));
    std::vector<double> out(static_cast<std::size_t>(values.rows()));
    Eigen::Map<Eigen::VectorXd>(out.data(), values.rows()) = values.col(j);
    return out;
}

NodeSeriesSet assemble_node_series(std::span<const DailyMeasures> measures,
                                   const HierarchyStructure& h) {
    NodeSeriesSet out;
    out.hierarchy = h;
    out.values.resize(static_cast<Eigen::Index>(measures.size()), static_cast<Eigen::Index>(h.size()));
    out.dates.reserve(measures.size());
    const auto bottoms = h.bottom_labels();
    Eigen::VectorXd b(static_cast<Eigen::Index>(h.n_bottom()));
    for (std::size_t t = 0; t < measures.size(); ++t) {
        const auto& m = measures[t];
        if (m.labels.size() != bottoms.size() || m.components.size() != bottoms.size()) {
            throw DataError("day " + m.date + ": " + std::to_string(m.labels.size()) +
                            " components, hierarchy " + h.name + " has " +
                            std::to_string(bottoms.size()) + " bottom series");
        }
        for (std::size_t j = 0; j < bottoms.size(); ++j) {
            if (m.labels[j] != bottoms[j]) {
                throw DataError("day " + m.date + ": component '" + m.labels[j] +
                                "' does not match bottom node '" + bottoms[j] + "'");
            }
            b(static_cast<Eigen::Index>(j)) = m.components[j];
        }
        out.values.row(static_cast<Eigen::Index>(t)) = (h.structural * b).transpose();
        out.dates.push_back(m.date);
    }
    return out;
}

NodeSeriesSet node_series_from_panel(const IntradayPanel& panel, const HierarchyStructure& h) {
    std::unique_ptr<PeriodicityProfile> profile;
    const bool needs_profile = h.bottom_spec.kind == DecompositionKind::PvStar ||
                               (h.bottom_spec.kind == DecompositionKind::Combined &&
                                h.bottom_spec.cross == DecompositionKind::PvStar);
    if (needs_profile) {
        profile = std::make_unique<PeriodicityProfile>(estimate_periodicity(panel));
    }
    std::vector<DailyMeasures> measures;
    measures.reserve(panel.size());
    for (const auto& day : panel.days()) {
        measures.push_back(decompose(day.date, day.returns, h.bottom_spec, profile.get()));
    }
    return assemble_node_series(measures, h);
}

} // namespace rvrecon
