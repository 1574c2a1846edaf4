#include "rvrecon/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "rvrecon/error.hpp"
#include "rvrecon/text.hpp"

namespace rvrecon {
namespace {

using CellKey = std::tuple<std::string, LossKind, std::size_t, std::string>;

std::vector<std::string> panels(const EvaluationReport& report) {
    std::vector<std::string> out = report.assets;
    out.emplace_back("geo_mean");
    return out;
}

std::map<CellKey, double> ratio_cells(const EvaluationReport& report) {
    std::map<CellKey, double> cells;
    for (const auto& r : report.ratios) {
        cells[CellKey{r.panel, r.loss, r.horizon, r.procedure}] = r.ratio;
    }
    return cells;
}

std::vector<std::string> compared(const EvaluationReport& report) {
    std::vector<std::string> out;
    for (const auto& p : report.procedures) {
        if (p != "HAR") {
            out.push_back(p);
        }
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

} // namespace

void write_ratio_csv(const EvaluationReport& report, std::ostream& out) {
    out << "panel,procedure";
    for (const auto kind : report.losses) {
        for (const auto h : report.horizons) {
            out << ',' << loss_kind_name(kind) << "_h" << h;
        }
    }
    out << '\n';
    const auto cells = ratio_cells(report);
    for (const auto& panel : panels(report)) {
        for (const auto& proc : compared(report)) {
            out << panel << ',' << proc;
            for (const auto kind : report.losses) {
                for (const auto h : report.horizons) {
                    const auto it = cells.find(CellKey{panel, kind, h, proc});
                    out << ',' << (it == cells.end() ? std::string() : format_double(it->second));
                }
            }
            out << '\n';
        }
    }
}

std::string format_ratio_table(const EvaluationReport& report) {
    const auto cells = ratio_cells(report);
    const auto procs = compared(report);
    std::size_t name_width = 10;
    for (const auto& p : procs) {
        name_width = std::max(name_width, p.size() + 2);
    }
    std::ostringstream os;
    os << "Loss ratios versus HAR (" << report.label << ")\n";
    os << std::setw(static_cast<int>(name_width)) << std::left << "";
    for (const auto kind : report.losses) {
        for (const auto h : report.horizons) {
            std::ostringstream col;
            col << loss_kind_name(kind) << " h=" << h;
            os << std::setw(12) << std::right << col.str();
        }
    }
    os << '\n';
    for (const auto& panel : panels(report)) {
        os << (panel == "geo_mean" ? std::string("[geometric mean across assets]")
                                   : "[" + panel + "]")
           << '\n';
        for (const auto& proc : procs) {
            os << std::setw(static_cast<int>(name_width)) << std::left << proc;
            for (const auto kind : report.losses) {
                for (const auto h : report.horizons) {
                    const auto it = cells.find(CellKey{panel, kind, h, proc});
                    os << std::setw(12) << std::right
                       << (it == cells.end() ? std::string("-") : format_fixed(it->second, 3));
                }
            }
            os << '\n';
        }
    }
    return os.str();
}

void write_dm_csv(const EvaluationReport& report, std::ostream& out) {
    std::vector<std::string> benchmarks;
    for (const auto& e : report.dm) {
        if (std::find(benchmarks.begin(), benchmarks.end(), e.benchmark) == benchmarks.end()) {
            benchmarks.push_back(e.benchmark);
        }
    }
    std::map<CellKey, std::map<std::string, double>> rows;
    for (const auto& e : report.dm) {
        rows[CellKey{e.asset, e.loss, e.horizon, e.procedure}][e.benchmark] = e.result.p_value;
    }
    out << "asset,loss,horizon,procedure";
    for (const auto& b : benchmarks) {
        out << ",dm_" << b;
    }
    out << '\n';
    for (const auto& asset : report.assets) {
        for (const auto kind : report.losses) {
            for (const auto h : report.horizons) {
                for (const auto& proc : report.procedures) {
                    const auto it = rows.find(CellKey{asset, kind, h, proc});
                    if (it == rows.end()) {
                        continue;
                    }
                    out << asset << ',' << loss_kind_name(kind) << ',' << h << ',' << proc;
                    for (const auto& b : benchmarks) {
                        const auto c = it->second.find(b);
                        out << ','
                            << (c == it->second.end() ? std::string() : format_double(c->second));
                    }
                    out << '\n';
                }
            }
        }
    }
}

void write_mcs_csv(const EvaluationReport& report, std::ostream& out) {
    out << "asset,loss,horizon,procedure,p_value,included\n";
    for (const auto& e : report.mcs) {
        out << e.asset << ',' << loss_kind_name(e.loss) << ',' << e.horizon << ',' << e.procedure
            << ',' << format_double(e.p_value) << ',' << (e.included ? 1 : 0) << '\n';
    }
}

void write_nemenyi_csv(const EvaluationReport& report, std::ostream& out) {
    out << "loss,horizon,procedure,mean_rank,lower,upper\n";
    for (const auto& e : report.nemenyi) {
        out << loss_kind_name(e.loss) << ',' << e.horizon << ',' << e.procedure << ','
            << format_double(e.mean_rank) << ',' << format_double(e.mean_rank - e.half_width)
            << ',' << format_double(e.mean_rank + e.half_width) << '\n';
    }
}

void write_report(const std::filesystem::path& dir, const EvaluationReport& report) {
    std::filesystem::create_directories(dir);
    std::ostringstream ratios;
    write_ratio_csv(report, ratios);
    write_file(dir / "ratios.csv", ratios.str());
    write_file(dir / "ratios.txt", format_ratio_table(report));
    std::ostringstream dm;
    write_dm_csv(report, dm);
    write_file(dir / "dm_pvalues.csv", dm.str());
    std::ostringstream m;
    write_mcs_csv(report, m);
    write_file(dir / "mcs.csv", m.str());
    std::ostringstream nem;
    write_nemenyi_csv(report, nem);
    write_file(dir / "nemenyi.csv", nem.str());
}

} // namespace rvrecon
