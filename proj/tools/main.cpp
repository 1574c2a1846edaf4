// rvrecon: realized-variance decomposition, HAR forecasting, reconciliation
// and forecast evaluation from the command line.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "manifest.hpp"
#include "rvrecon/error.hpp"
#include "rvrecon/har.hpp"
#include "rvrecon/hierarchy.hpp"
#include "rvrecon/io.hpp"
#include "rvrecon/log.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/report.hpp"
#include "rvrecon/synthetic.hpp"
#include "rvrecon/text.hpp"

#ifndef RVRECON_VERSION
#define RVRECON_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace rvrecon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::size_t default_jobs() {
    return std::max(1U, std::thread::hardware_concurrency());
}

std::string stem_of(const fs::path& p) {
    auto s = p.stem().string();
    // "AAA.panel.csv" -> "AAA"
    if (const auto dot = s.find('.'); dot != std::string::npos) {
        s.resize(dot);
    }
    return s;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p);
    if (!out) {
        throw DataError("cannot write " + p.string());
    }
    return out;
}

// ------------------------------------------------------------------ ingest

struct IngestArgs {
    std::vector<std::string> files;
    std::string out_dir;
    std::size_t grid = kDefaultGridSize;
    std::string asset;
};

int cmd_ingest(const IngestArgs& a) {
    if (!a.asset.empty() && a.files.size() > 1) {
        throw ConfigError("--asset needs exactly one input file");
    }
    for (const auto& file : a.files) {
        const auto asset = a.asset.empty() ? stem_of(file) : a.asset;
        const auto res = ingest_prices(fs::path(file), asset, a.grid);
        const fs::path dir(a.out_dir);
        write_panel_csv(dir / (asset + ".panel.csv"), res.panel);
        auto out = open_out(dir / (asset + ".days.csv"));
        out << "date,prices,status,reason,flags\n";
        std::size_t flagged = 0;
        for (const auto& d : res.days) {
            std::string flags;
            for (const auto& f : d.flags) {
                flags += (flags.empty() ? "" : ";") + f;
            }
            std::replace(flags.begin(), flags.end(), ',', ' ');
            flagged += d.flags.empty() ? 0 : 1;
            out << d.date << ',' << d.prices << ',' << (d.accepted ? "accepted" : "skipped") << ','
                << d.reason << ',' << flags << '\n';
        }
        std::cout << asset << ": " << res.panel.size() << " days accepted, "
                  << res.days.size() - res.panel.size() << " skipped, " << flagged
                  << " flagged\n";
    }
    return kExitOk;
}

// --------------------------------------------------------------- decompose

struct DecomposeArgs {
    std::string panel;
    std::vector<std::string> hierarchies;
    std::vector<double> alphas{kDefaultAlphas.begin(), kDefaultAlphas.end()};
    std::string out;
    std::string asset;
};

int cmd_decompose(const DecomposeArgs& a) {
    const auto asset = a.asset.empty() ? stem_of(a.panel) : a.asset;
    const auto panel = read_panel_csv(a.panel, asset);
    AssetData data;
    data.asset_id = asset;
    std::vector<std::string> order;
    double worst = 0.0;
    for (const auto& name : a.hierarchies) {
        const auto hs = build_hierarchy(name, a.alphas, kDefaultSegmentLength, panel.grid_size());
        const auto nodes = node_series_from_panel(panel, hs);
        for (Eigen::Index t = 0; t < nodes.values.rows(); ++t) {
            const Eigen::VectorXd y = nodes.values.row(t).transpose();
            const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
            const double res = coherence_residual(std::span<const double>(y.data(), y.size()), hs);
            worst = std::max(worst, res / scale);
            if (res > 1e-10 * scale) {
                throw NumericalError(name + " series incoherent on " +
                                     nodes.dates[static_cast<std::size_t>(t)]);
            }
        }
        merge_node_series(data, nodes);
        for (const auto& l : hs.labels) {
            if (std::find(order.begin(), order.end(), l) == order.end()) {
                order.push_back(l);
            }
        }
    }
    write_asset_csv(a.out, data, order);
    std::cout << asset << ": " << data.size() << " days x " << order.size()
              << " series, max relative coherence residual " << format_double(worst) << '\n';
    return kExitOk;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
    std::string series;
    std::string model = "HAR";
    std::string node = "RV";
    std::size_t horizon = 1;
    std::size_t window = 0;
    bool all_nodes = false;
    std::string dump;
};

std::vector<std::string> term_names(HarModel model, const std::string& node) {
    switch (model) {
    case HarModel::Har:
        return {"const", "RV_d", "RV_w", "RV_m"};
    case HarModel::SvHar:
        return {"const", "SV+_d", "SV-_d", "RV_w", "RV_m"};
    case HarModel::Pv3Har:
        return {"const", "PV1_d", "PV2_d", "PV3_d", "RV_w", "RV_m"};
    case HarModel::NodeHar:
        break;
    }
    return {"const", node + "_d", node + "_w", node + "_m"};
}

int cmd_fit(const FitArgs& a) {
    const auto data = read_node_series_csv(a.series, stem_of(a.series));
    const std::size_t count = a.window == 0 ? data.size() : a.window;
    if (count > data.size()) {
        throw DataError("window " + std::to_string(count) + " exceeds the " +
                        std::to_string(data.size()) + " days in " + a.series);
    }
    const std::size_t first = data.size() - count;

    std::vector<std::pair<HarModel, std::string>> jobs;
    if (a.all_nodes) {
        for (const auto& [label, values] : data.series) {
            jobs.emplace_back(HarModel::NodeHar, label);
        }
    } else {
        jobs.emplace_back(parse_har_model(a.model), a.node);
    }

    std::ofstream dump;
    if (!a.dump.empty()) {
        dump = open_out(a.dump);
        dump << "model,node,horizon,term,coefficient,hc1_se\n";
    }
    for (const auto& [model, node] : jobs) {
        const auto design = build_design(data.series, model, a.horizon, node, first, count);
        const auto fit = ols_fit(design, model);
        const auto names = term_names(model, node);
        std::cout << har_model_name(model) << " " << node << " h=" << a.horizon << " ("
                  << design.target.size() << " rows, rank " << fit.rank << ")\n";
        for (std::size_t j = 0; j < names.size(); ++j) {
            const auto se = fit.robust_se[j];
            const auto coef = fit.coefficients(static_cast<Eigen::Index>(j));
            std::cout << "  " << names[j] << "  " << format_double(coef) << "  "
                      << (se ? format_double(*se) : std::string("NA")) << '\n';
            if (dump.is_open()) {
                dump << har_model_name(model) << ',' << node << ',' << a.horizon << ','
                     << names[j] << ',' << format_double(coef) << ','
                     << (se ? format_double(*se) : std::string("NA")) << '\n';
            }
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------- forecast

struct RollArgs {
    std::string series;
    std::string hierarchy;
    std::vector<std::size_t> horizons{1};
    std::size_t window = 1007;
    std::size_t step = 1;
    std::string asset;
    std::string out;
};

// Per-node base forecasts from each node's own HAR, before reconciliation.
int cmd_forecast(const RollArgs& a) {
    const auto asset = a.asset.empty() ? stem_of(a.series) : a.asset;
    const auto data = read_node_series_csv(a.series, asset);
    const auto hs = build_hierarchy(a.hierarchy);
    if (a.step == 0) {
        throw ConfigError("step must be at least 1");
    }
    ForecastStore store;
    for (const auto h : a.horizons) {
        if (data.size() < a.window + h) {
            throw DataError("need at least " + std::to_string(a.window + h) + " days, have " +
                            std::to_string(data.size()));
        }
        for (std::size_t t = a.window; t + h <= data.size(); t += a.step) {
            for (const auto& label : hs.labels) {
                const auto design =
                    build_design(data.series, HarModel::NodeHar, h, label, t - a.window, a.window);
                const auto fit = ols_fit(design, HarModel::NodeHar, {.robust_se = false});
                store.append({asset, data.dates[t], h, label, "base", forecast(fit, design.latest)});
            }
        }
    }
    store.write_csv(a.out);
    std::cout << "wrote " << store.size() << " base forecasts to " << a.out << '\n';
    return kExitOk;
}

// --------------------------------------------------------------- reconcile

struct ReconcileArgs {
    RollArgs roll;
    std::string method = "shr";
    std::optional<double> lambda;
    std::size_t jobs = default_jobs();
};

Procedure reconciled_procedure(const std::string& hierarchy, bool shrink, ExperimentConfig& cfg) {
    const std::vector<std::string> tsv{"STSV", "SV-T", "T-SV", "CTSV"};
    const std::vector<std::string> tpv3{"STPV3", "PV3-T", "T-PV3", "CTPV3"};
    auto in = [&](const std::vector<std::string>& v) {
        return std::find(v.begin(), v.end(), hierarchy) != v.end();
    };
    if (hierarchy == "SSV") {
        return shrink ? Procedure::SvShr : Procedure::SvBu;
    }
    if (hierarchy == "SPV3") {
        return shrink ? Procedure::Pv3Shr : Procedure::Pv3Bu;
    }
    if (in(tsv)) {
        cfg.tsv_hierarchy = hierarchy;
        return shrink ? Procedure::TsvShr : Procedure::TsvBu;
    }
    if (in(tpv3)) {
        cfg.tpv3_hierarchy = hierarchy;
        return shrink ? Procedure::Tpv3Shr : Procedure::Tpv3Bu;
    }
    throw ConfigError("reconcile supports SSV, SPV3, STSV, SV-T, T-SV, CTSV, STPV3, PV3-T, "
                      "T-PV3 and CTPV3; got '" + hierarchy + "'");
}

int cmd_reconcile(const ReconcileArgs& a) {
    if (a.method != "bu" && a.method != "shr") {
        throw ConfigError("--method must be bu or shr");
    }
    const auto asset = a.roll.asset.empty() ? stem_of(a.roll.series) : a.roll.asset;
    const std::vector<AssetData> data{read_node_series_csv(a.roll.series, asset)};
    ExperimentConfig cfg;
    cfg.assets = {asset};
    const auto proc = reconciled_procedure(a.roll.hierarchy, a.method == "shr", cfg);
    cfg.procedures = {Procedure::Har, proc};
    cfg.horizons = a.roll.horizons;
    cfg.window = a.roll.window;
    cfg.step = a.roll.step;
    cfg.forced_lambda = a.lambda;
    cfg.jobs = a.jobs;
    cfg.validate();
    const auto run = run_rolling(cfg, data);
    ForecastStore store;
    const std::string name(procedure_name(proc));
    for (const auto& r : run.store.records()) {
        if (r.method == name) {
            store.append(r);
        }
    }
    store.write_csv(a.roll.out);
    const auto checked = ForecastStore::read_csv(a.roll.out).audit_coherence(cfg);
    std::cout << "wrote " << store.size() << " " << name << " forecasts to " << a.roll.out
              << "; " << checked << " rows coherent on read-back\n";
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string losses;
    std::string out_dir;
    std::string config;
    std::size_t jobs = default_jobs();
};

void write_reports(const fs::path& dir, const LossTable& table, const ExperimentConfig& cfg) {
    const auto full = evaluate_losses(table, cfg);
    write_report(dir, full);
    std::cout << format_ratio_table(full);
    for (const auto& rep : sub_period_report(table, cfg.sub_periods, cfg)) {
        write_report(dir / "sub_periods" / rep.label, rep);
    }
}

int cmd_evaluate(const EvaluateArgs& a) {
    const auto table = LossTable::read_csv(a.losses);
    ExperimentConfig cfg;
    if (!a.config.empty()) {
        cfg = load_run_config(a.config).experiment;
    } else {
        cfg.procedures.clear();
        cfg.horizons.clear();
        for (const auto& r : table.records) {
            const auto p = parse_procedure(r.procedure);
            if (std::find(cfg.procedures.begin(), cfg.procedures.end(), p) ==
                cfg.procedures.end()) {
                cfg.procedures.push_back(p);
            }
            if (std::find(cfg.horizons.begin(), cfg.horizons.end(), r.horizon) ==
                cfg.horizons.end()) {
                cfg.horizons.push_back(r.horizon);
            }
            if (std::find(cfg.assets.begin(), cfg.assets.end(), r.asset) == cfg.assets.end()) {
                cfg.assets.push_back(r.asset);
            }
        }
        std::sort(cfg.procedures.begin(), cfg.procedures.end());
        std::sort(cfg.horizons.begin(), cfg.horizons.end());
    }
    cfg.jobs = a.jobs;
    write_reports(a.out_dir, table, cfg);
    return kExitOk;
}

// --------------------------------------------------------------------- run

struct RunArgs {
    std::string config;
    std::string out;
    std::size_t jobs = default_jobs();
};

int cmd_run(const RunArgs& a) {
    const auto started = cli::utc_timestamp();
    auto spec = load_run_config(a.config);
    spec.experiment.jobs = a.jobs;
    const auto& cfg = spec.experiment;
    const fs::path out(a.out);
    fs::create_directories(out);

    const auto data = load_assets(spec);
    const auto run = run_rolling(cfg, data);
    const auto forecasts = out / "forecasts.csv";
    const auto losses = out / "losses.csv";
    run.store.write_csv(forecasts);
    run.losses.write_csv(losses);

    // Audits on the written artifacts, not the in-memory copies.
    const auto coherent_rows = ForecastStore::read_csv(forecasts).audit_coherence(cfg);
    const auto reread = LossTable::read_csv(losses);
    if (reread.records.size() != run.losses.records.size()) {
        throw DataError("losses.csv read-back row count differs");
    }
    logger()->info("{} reconciled rows coherent on read-back", coherent_rows);

    write_reports(out, reread, cfg);

    std::vector<fs::path> inputs{a.config};
    for (const auto& [asset, path] : spec.data.files) {
        inputs.push_back(path);
    }
    std::vector<fs::path> outputs;
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
            outputs.push_back(entry.path());
        }
    }
    std::sort(outputs.begin(), outputs.end());

    const auto snapshot = config_snapshot(spec);
    nlohmann::ordered_json m;
    m["tool"] = "rvrecon";
    m["version"] = RVRECON_VERSION;
    m["config"] = nlohmann::ordered_json::parse(snapshot);
    m["config_sha256"] = cli::sha256_text(snapshot);
    m["seed"] = cfg.seed;
    m["inputs"] = cli::to_json(cli::digest_files(inputs));
    m["outputs"] = cli::to_json(cli::digest_files(outputs, out));
    m["jobs"] = cfg.jobs;
    nlohmann::ordered_json lambdas;
    for (const auto& [name, lambda] : run.diagnostics.mean_lambda) {
        lambdas[name] = lambda;
    }
    m["diagnostics"] = {{"origins", run.diagnostics.origins},
                        {"forecast_rows", run.store.size()},
                        {"loss_rows", run.losses.records.size()},
                        {"floored", run.diagnostics.floored},
                        {"jitter_events", run.diagnostics.jitter_events},
                        {"mean_lambda", lambdas}};
    m["audits"] = {{"coherent_rows", coherent_rows}, {"passed", true}};
    m["started_at"] = started;
    m["finished_at"] = cli::utc_timestamp();
    open_out(out / "manifest.json") << m.dump(2) << '\n';
    logger()->info("run complete: {}", out.string());
    return kExitOk;
}

// ---------------------------------------------------------------- describe

struct DescribeArgs {
    std::string name;
    bool matrices = false;
};

void print_matrix(const char* title, const Eigen::MatrixXi& m) {
    std::cout << title << " (" << m.rows() << " x " << m.cols() << ")\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::cout << ' ';
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::cout << ' ' << (m(i, j) < 0 ? "" : " ") << m(i, j);
        }
        std::cout << '\n';
    }
}

int cmd_describe(const DescribeArgs& a) {
    if (a.name.empty()) {
        std::cout << "name     n_a  n_b    n\n";
        for (const auto& name : catalog_names()) {
            const auto hs = build_hierarchy(name);
            std::printf("%-7s %4zu %4zu %4zu\n", name.c_str(), hs.n_upper(), hs.n_bottom(),
                        hs.size());
        }
        return kExitOk;
    }
    const auto hs = build_hierarchy(a.name);
    std::cout << hs.name << ": n_a=" << hs.n_upper() << " n_b=" << hs.n_bottom()
              << " n=" << hs.size() << '\n';
    std::cout << "upper:";
    for (const auto& l : hs.upper_labels()) {
        std::cout << ' ' << l;
    }
    std::cout << "\nbottom:";
    for (const auto& l : hs.bottom_labels()) {
        std::cout << ' ' << l;
    }
    std::cout << '\n';
    if (a.matrices) {
        print_matrix("S", hs.structural_int());
        print_matrix("C", hs.constraints_int());
    }
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string out_dir;
    std::size_t assets = 3;
    std::size_t days = 1200;
    std::uint64_t seed = 20240101;
    std::string hierarchy;
    double noise = 0.3;
};

int cmd_simulate(const SimulateArgs& a) {
    const fs::path dir(a.out_dir);
    for (std::size_t i = 0; i < a.assets; ++i) {
        const auto asset = "SYN" + std::to_string(i + 1);
        if (a.hierarchy.empty()) {
            const auto panel = synthetic_asset_panel(a.seed, i, a.days, asset);
            write_panel_csv(dir / (asset + ".panel.csv"), panel);
        } else {
            const auto hs = build_hierarchy(a.hierarchy);
            const auto nodes = synthetic_node_series(derive_seed(a.seed, i), a.days, hs, a.noise);
            write_node_series_csv(dir / (asset + ".nodes.csv"), nodes);
        }
        std::cout << "wrote " << asset << '\n';
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Realized-variance decomposition, HAR forecasting and forecast reconciliation"};
    app.set_version_flag("--version", RVRECON_VERSION);
    app.require_subcommand(1);
    std::string level = "info";
    app.add_option("--log-level", level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Validate minute price files into return panels");
    c_ingest->add_option("files", ingest.files, "timestamp,price files")->required();
    c_ingest->add_option("--out-dir", ingest.out_dir)->required();
    c_ingest->add_option("--grid", ingest.grid, "returns per day")->check(CLI::PositiveNumber);
    c_ingest->add_option("--asset", ingest.asset, "asset id (default: file stem)");

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Node series of one or more hierarchies");
    c_dec->add_option("--panel", dec.panel)->required();
    c_dec->add_option("--hierarchy", dec.hierarchies)->required();
    c_dec->add_option("--alphas", dec.alphas)->delimiter(',');
    c_dec->add_option("--out", dec.out)->required();
    c_dec->add_option("--asset", dec.asset);

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "Fit a HAR-family model to node series");
    c_fit->add_option("--series", fit.series)->required();
    c_fit->add_option("--model", fit.model, "HAR, SV_HAR, PV3_HAR or NODE_HAR");
    c_fit->add_option("--node", fit.node, "dependent series for NODE_HAR");
    c_fit->add_option("--horizon", fit.horizon)->check(CLI::PositiveNumber);
    c_fit->add_option("--window", fit.window, "use the last W days (0: all)");
    c_fit->add_flag("--all-nodes", fit.all_nodes, "NODE_HAR on every column");
    c_fit->add_option("--dump-fits", fit.dump, "write coefficients as CSV");

    auto add_roll = [](CLI::App* c, RollArgs& r) {
        c->add_option("--series", r.series)->required();
        c->add_option("--hierarchy", r.hierarchy)->required();
        c->add_option("--horizon", r.horizons)->delimiter(',');
        c->add_option("--window", r.window)->check(CLI::PositiveNumber);
        c->add_option("--step", r.step)->check(CLI::PositiveNumber);
        c->add_option("--asset", r.asset);
        c->add_option("--out", r.out)->required();
    };
    RollArgs fc;
    auto* c_fc = app.add_subcommand("forecast", "Rolling base forecasts for every node");
    add_roll(c_fc, fc);

    ReconcileArgs rec;
    auto* c_rec = app.add_subcommand("reconcile", "Rolling bottom-up or MinT-shrinkage forecasts");
    add_roll(c_rec, rec.roll);
    c_rec->add_option("--method", rec.method)->check(CLI::IsMember({"bu", "shr"}));
    c_rec->add_option("--lambda", rec.lambda, "fixed shrinkage intensity")
        ->check(CLI::Range(0.0, 1.0));
    c_rec->add_option("--jobs", rec.jobs)->check(CLI::PositiveNumber);

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Ratios, DM, MCS and Nemenyi from a loss table");
    c_ev->add_option("--losses", ev.losses)->required();
    c_ev->add_option("--out-dir", ev.out_dir)->required();
    c_ev->add_option("--config", ev.config, "run configuration for test settings");
    c_ev->add_option("--jobs", ev.jobs)->check(CLI::PositiveNumber);

    RunArgs run;
    auto* c_run = app.add_subcommand("run", "Full rolling experiment from a configuration file");
    c_run->add_option("--config", run.config)->required();
    c_run->add_option("--out", run.out)->required();
    c_run->add_option("--jobs", run.jobs)->check(CLI::PositiveNumber);

    DescribeArgs desc;
    auto* c_desc = app.add_subcommand("describe", "Print the layout of a catalog hierarchy");
    c_desc->add_option("name", desc.name, "hierarchy name (omit to list the catalog)");
    c_desc->add_option("--hierarchy", desc.name);
    c_desc->add_flag("--matrices", desc.matrices, "also print S and C");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Write synthetic panels or node series");
    c_sim->add_option("--out-dir", sim.out_dir)->required();
    c_sim->add_option("--assets", sim.assets)->check(CLI::PositiveNumber);
    c_sim->add_option("--days", sim.days)->check(CLI::PositiveNumber);
    c_sim->add_option("--seed", sim.seed);
    c_sim->add_option("--hierarchy", sim.hierarchy, "node-level generator for this hierarchy");
    c_sim->add_option("--noise", sim.noise);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    logger()->set_level(spdlog::level::from_str(level));

    try {
        if (*c_ingest) return cmd_ingest(ingest);
        if (*c_dec) return cmd_decompose(dec);
        if (*c_fit) return cmd_fit(fit);
        if (*c_fc) return cmd_forecast(fc);
        if (*c_rec) return cmd_reconcile(rec);
        if (*c_ev) return cmd_evaluate(ev);
        if (*c_run) return cmd_run(run);
        if (*c_desc) return cmd_describe(desc);
        if (*c_sim) return cmd_simulate(sim);
    } catch (const ConfigError& e) {
        logger()->error("{}", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        logger()->error("{}", e.what());
        return kExitData;
    } catch (const NumericalError& e) {
        logger()->error("{}", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        logger()->error("{}", e.what());
        return 1;
    }
    return kExitOk;
}
