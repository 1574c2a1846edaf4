#include "rvrecon/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "rvrecon/error.hpp"
#include "rvrecon/log.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/synthetic.hpp"
#include "rvrecon/text.hpp"

namespace rvrecon {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr std::size_t kMaxListedErrors = 10;

bool is_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

bool valid_date(std::string_view d) {
    return d.size() == 10 && d[4] == '-' && d[7] == '-' && is_digits(d.substr(0, 4)) &&
           is_digits(d.substr(5, 2)) && is_digits(d.substr(8, 2));
}

// "HH:MM" or "HH:MM:SS" (optionally with fractional seconds) -> sortable key.
std::optional<std::string> time_key(std::string_view t) {
    if (t.size() < 5 || t[2] != ':' || !is_digits(t.substr(0, 2)) || !is_digits(t.substr(3, 2))) {
        return std::nullopt;
    }
    if (t.size() == 5) {
        return std::string(t) + ":00";
    }
    if (t.size() < 8 || t[5] != ':' || !is_digits(t.substr(6, 2))) {
        return std::nullopt;
    }
    if (t.size() > 8 && (t[8] != '.' || !is_digits(t.substr(9)))) {
        return std::nullopt;
    }
    return std::string(t);
}

struct PriceRow {
    std::string time;
    double price;
    std::size_t line;
};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

std::string join_errors(const std::string& source, const std::vector<std::string>& errors) {
    std::string msg = source + ": " + std::to_string(errors.size()) + " unparseable row(s)";
    for (std::size_t i = 0; i < std::min(errors.size(), kMaxListedErrors); ++i) {
        msg += "\n  " + errors[i];
    }
    if (errors.size() > kMaxListedErrors) {
        msg += "\n  ...";
    }
    return msg;
}

} // namespace

IngestResult ingest_prices(std::istream& in, const std::string& source,
                           const std::string& asset_id, std::size_t grid_size) {
    std::map<std::string, std::vector<PriceRow>> by_day;
    std::vector<std::string> errors;
    std::string raw;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = chomp(raw);
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        const bool header = first && fields.size() == 2 && !valid_date(fields[0].substr(0, 10));
        first = false;
        if (header) {
            continue;
        }
        const auto where = "line " + std::to_string(line_no);
        if (fields.size() != 2) {
            errors.push_back(where + ": expected 2 fields, got " + std::to_string(fields.size()));
            continue;
        }
        const auto ts = fields[0];
        if (ts.size() < 16 || !valid_date(ts.substr(0, 10)) || (ts[10] != ' ' && ts[10] != 'T')) {
            errors.push_back(where + ": bad timestamp '" + std::string(ts) + "'");
            continue;
        }
        const auto key = time_key(ts.substr(11));
        if (!key) {
            errors.push_back(where + ": bad timestamp '" + std::string(ts) + "'");
            continue;
        }
        double price = 0.0;
        try {
            price = parse_double(fields[1], where);
        } catch (const DataError& e) {
            errors.emplace_back(e.what());
            continue;
        }
        if (!(price > 0.0) || !std::isfinite(price)) {
            errors.push_back(where + ": non-positive price " + std::string(fields[1]));
            continue;
        }
        by_day[std::string(ts.substr(0, 10))].push_back({*key, price, line_no});
    }
    if (!errors.empty()) {
        throw DataError(join_errors(source, errors));
    }

    IngestResult result{IntradayPanel(asset_id, grid_size), {}};
    for (auto& [date, rows] : by_day) {
        DayStatus status;
        status.date = date;
        std::stable_sort(rows.begin(), rows.end(),
                         [](const PriceRow& a, const PriceRow& b) { return a.time < b.time; });
        std::vector<double> prices;
        prices.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].time == rows[i - 1].time) {
                status.flags.push_back("line " + std::to_string(rows[i].line) +
                                       ": duplicate timestamp " + date + " " + rows[i].time);
                continue;
            }
            prices.push_back(rows[i].price);
        }
        status.prices = prices.size();
        for (const auto& f : status.flags) {
            logger()->warn("{} {}: {}", source, date, f);
        }
        if (prices.size() < grid_size + 1) {
            status.reason = "short day";
        } else if (prices.size() > grid_size + 1) {
            status.reason = "long day";
        } else {
            result.panel.add_day(date, log_returns(prices));
            status.accepted = true;
        }
        if (!status.accepted) {
            logger()->warn("day {} skipped: {} ({} prices, expected {})", date, status.reason,
                           prices.size(), grid_size + 1);
        }
        result.days.push_back(std::move(status));
    }
    return result;
}

IngestResult ingest_prices(const std::filesystem::path& path, const std::string& asset_id,
                           std::size_t grid_size) {
    auto in = open_input(path);
    return ingest_prices(in, path.string(), asset_id, grid_size);
}

void write_panel_csv(const std::filesystem::path& path, const IntradayPanel& panel) {
    auto out = open_output(path);
    out << "date";
    for (std::size_t i = 1; i <= panel.grid_size(); ++i) {
        out << ",r" << i;
    }
    out << '\n';
    for (const auto& day : panel.days()) {
        out << day.date;
        for (double r : day.returns) {
            out << ',' << format_double(r);
        }
        out << '\n';
    }
}

IntradayPanel read_panel_csv(const std::filesystem::path& path, const std::string& asset_id) {
    auto in = open_input(path);
    std::string raw;
    if (!std::getline(in, raw)) {
        throw DataError(path.string() + ": empty file");
    }
    std::vector<std::string> header;
    for (auto f : split_fields(chomp(raw))) {
        header.emplace_back(f);
    }
    if (header.size() < 2 || header[0] != "date") {
        throw DataError(path.string() + ": header must be date,r1,...,rN");
    }
    IntradayPanel panel(asset_id, header.size() - 1);
    std::size_t line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = chomp(raw);
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        const auto where = path.string() + " line " + std::to_string(line_no);
        if (fields.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
        }
        std::vector<double> returns;
        returns.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            returns.push_back(parse_double(fields[i], where));
        }
        panel.add_day(std::string(fields[0]), std::move(returns));
    }
    return panel;
}

void write_node_series_csv(const std::filesystem::path& path, const NodeSeriesSet& nodes) {
    auto out = open_output(path);
    out << "date";
    for (const auto& label : nodes.hierarchy.labels) {
        out << ',' << label;
    }
    out << '\n';
    for (std::size_t t = 0; t < nodes.dates.size(); ++t) {
        out << nodes.dates[t];
        for (Eigen::Index j = 0; j < nodes.values.cols(); ++j) {
            out << ',' << format_double(nodes.values(static_cast<Eigen::Index>(t), j));
        }
        out << '\n';
    }
}

void write_asset_csv(const std::filesystem::path& path, const AssetData& data,
                     std::span<const std::string> order) {
    std::vector<const std::vector<double>*> cols;
    std::vector<std::string> labels;
    auto add = [&](const std::string& label) {
        const auto it = data.series.find(label);
        if (it == data.series.end()) {
            throw DataError("asset " + data.asset_id + ": series '" + label + "' missing");
        }
        if (it->second.size() != data.size()) {
            throw DataError("asset " + data.asset_id + ": series '" + label + "' is misaligned");
        }
        labels.push_back(label);
        cols.push_back(&it->second);
    };
    if (order.empty()) {
        for (const auto& [label, values] : data.series) {
            add(label);
        }
    } else {
        for (const auto& label : order) {
            add(label);
        }
    }
    auto out = open_output(path);
    out << "date";
    for (const auto& label : labels) {
        out << ',' << label;
    }
    out << '\n';
    for (std::size_t t = 0; t < data.size(); ++t) {
        out << data.dates[t];
        for (const auto* col : cols) {
            out << ',' << format_double((*col)[t]);
        }
        out << '\n';
    }
}

AssetData read_node_series_csv(const std::filesystem::path& path, const std::string& asset_id) {
    auto in = open_input(path);
    std::string raw;
    if (!std::getline(in, raw)) {
        throw DataError(path.string() + ": empty file");
    }
    std::vector<std::string> header;
    for (auto f : split_fields(chomp(raw))) {
        header.emplace_back(f);
    }
    if (header.size() < 2 || header[0] != "date") {
        throw DataError(path.string() + ": header must be date,<label>,...");
    }
    AssetData data;
    data.asset_id = asset_id;
    std::vector<std::vector<double>> columns(header.size() - 1);
    std::size_t line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = chomp(raw);
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        const auto where = path.string() + " line " + std::to_string(line_no);
        if (fields.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
        }
        if (!data.dates.empty() && !(data.dates.back() < fields[0])) {
            throw DataError(where + ": dates must be strictly increasing");
        }
        data.dates.emplace_back(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            columns[i - 1].push_back(parse_double(fields[i], where));
        }
    }
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (!data.series.emplace(header[i], std::move(columns[i - 1])).second) {
            throw DataError(path.string() + ": duplicate column " + header[i]);
        }
    }
    return data;
}

namespace {

// Moves "a.b.c": v into {"a": {"b": {"c": v}}}.
Json unflatten_dotted(const Json& in) {
    if (!in.is_object()) {
        throw ConfigError("configuration must be a JSON object");
    }
    Json out = Json::object();
    for (const auto& [key, value] : in.items()) {
        Json* node = &out;
        std::string_view rest = key;
        for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
            Json& child = (*node)[std::string(rest.substr(0, dot))];
            if (child.is_null()) {
                child = Json::object();
            } else if (!child.is_object()) {
                throw ConfigError("configuration key '" + key + "' conflicts with a scalar");
            }
            node = &child;
            rest.remove_prefix(dot + 1);
        }
        Json& leaf = (*node)[std::string(rest)];
        if (leaf.is_object() && value.is_object()) {
            leaf.update(value);
        } else if (!leaf.is_null()) {
            throw ConfigError("configuration key '" + key + "' given twice");
        } else {
            leaf = value;
        }
    }
    return out;
}

void check_keys(const Json& obj, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(std::string(where) + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            std::string msg = "unknown configuration key '";
            msg += where.empty() ? key : std::string(where) + "." + key;
            msg += "'";
            throw ConfigError(msg);
        }
    }
}

template <typename T>
T get_as(const Json& j, std::string_view key) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("configuration key '" + std::string(key) + "' has the wrong type");
    }
}

std::size_t get_size(const Json& j, std::string_view key) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ConfigError("configuration key '" + std::string(key) +
                          "' must be a non-negative integer");
    }
    return j.get<std::size_t>();
}

const std::vector<std::string> kTsvNames{"STSV", "SV-T", "T-SV", "CTSV"};
const std::vector<std::string> kTpv3Names{"STPV3", "PV3-T", "T-PV3", "CTPV3"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

} // namespace

RunSpec parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    Json root;
    try {
        root = Json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid configuration JSON: ") + e.what());
    }
    root = unflatten_dotted(root);
    check_keys(root, "",
               {"assets", "data", "procedures", "horizons", "window", "step", "alphas",
                "hierarchy", "losses", "qlike", "bootstrap", "mcs", "nemenyi", "seed",
                "sub_periods", "shrinkage", "floor", "jobs"});

    RunSpec spec;
    auto& cfg = spec.experiment;

    if (root.contains("data")) {
        const auto& data = root["data"];
        check_keys(data, "data", {"source", "days", "files"});
        const auto source = data.contains("source") ? get_as<std::string>(data["source"], "data.source")
                                                    : std::string("synthetic");
        if (source == "synthetic") {
            spec.data.kind = DataSource::Kind::Synthetic;
        } else if (source == "panels") {
            spec.data.kind = DataSource::Kind::Panels;
        } else if (source == "nodes") {
            spec.data.kind = DataSource::Kind::Nodes;
        } else {
            throw ConfigError("data.source must be synthetic, panels or nodes, got '" + source +
                              "'");
        }
        if (data.contains("days")) {
            spec.data.days = get_size(data["days"], "data.days");
        }
        if (data.contains("files")) {
            const auto& files = data["files"];
            if (!files.is_object()) {
                throw ConfigError("data.files must map asset ids to paths");
            }
            for (const auto& [asset, file] : files.items()) {
                std::filesystem::path p = get_as<std::string>(file, "data.files." + asset);
                if (p.is_relative() && !base_dir.empty()) {
                    p = base_dir / p;
                }
                spec.data.files.emplace(asset, p);
            }
        }
    }

    if (root.contains("assets")) {
        cfg.assets = get_as<std::vector<std::string>>(root["assets"], "assets");
    } else {
        for (const auto& [asset, file] : spec.data.files) {
            cfg.assets.push_back(asset);
        }
    }
    if (spec.data.kind != DataSource::Kind::Synthetic) {
        for (const auto& a : cfg.assets) {
            if (spec.data.files.find(a) == spec.data.files.end()) {
                throw ConfigError("no data file configured for asset " + a);
            }
        }
    }

    if (root.contains("procedures")) {
        cfg.procedures.clear();
        for (const auto& name : get_as<std::vector<std::string>>(root["procedures"], "procedures")) {
            cfg.procedures.push_back(parse_procedure(name));
        }
    }
    if (root.contains("horizons")) {
        cfg.horizons.clear();
        for (const auto& h : root["horizons"]) {
            cfg.horizons.push_back(get_size(h, "horizons"));
        }
    }
    if (root.contains("window")) {
        cfg.window = get_size(root["window"], "window");
    }
    if (root.contains("step")) {
        cfg.step = get_size(root["step"], "step");
    }
    if (root.contains("alphas")) {
        cfg.alphas = get_as<std::vector<double>>(root["alphas"], "alphas");
    }
    if (root.contains("hierarchy")) {
        const auto& h = root["hierarchy"];
        if (h.is_string()) {
            const auto name = h.get<std::string>();
            if (contains(kTsvNames, name)) {
                cfg.tsv_hierarchy = name;
            } else if (contains(kTpv3Names, name)) {
                cfg.tpv3_hierarchy = name;
            } else {
                throw ConfigError("hierarchy '" + name +
                                  "' is not a sign-temporal or quantile-temporal structure");
            }
        } else {
            check_keys(h, "hierarchy", {"TSV", "TPV3"});
            if (h.contains("TSV")) {
                cfg.tsv_hierarchy = get_as<std::string>(h["TSV"], "hierarchy.TSV");
            }
            if (h.contains("TPV3")) {
                cfg.tpv3_hierarchy = get_as<std::string>(h["TPV3"], "hierarchy.TPV3");
            }
        }
    }
    if (root.contains("losses")) {
        cfg.losses.clear();
        for (const auto& name : get_as<std::vector<std::string>>(root["losses"], "losses")) {
            cfg.losses.push_back(parse_loss_kind(name));
        }
    }
    if (root.contains("qlike")) {
        check_keys(root["qlike"], "qlike", {"mode"});
        if (root["qlike"].contains("mode")) {
            cfg.qlike_mode = parse_qlike_mode(get_as<std::string>(root["qlike"]["mode"], "qlike.mode"));
        }
    }
    if (root.contains("bootstrap")) {
        const auto& b = root["bootstrap"];
        check_keys(b, "bootstrap", {"n", "block"});
        if (b.contains("n")) {
            cfg.mcs.n_boot = get_size(b["n"], "bootstrap.n");
        }
        if (b.contains("block")) {
            cfg.mcs.block_length = get_as<double>(b["block"], "bootstrap.block");
        }
    }
    if (root.contains("mcs")) {
        const auto& m = root["mcs"];
        check_keys(m, "mcs", {"alpha", "statistic"});
        if (m.contains("alpha")) {
            cfg.mcs.alpha = get_as<double>(m["alpha"], "mcs.alpha");
        }
        if (m.contains("statistic")) {
            cfg.mcs.statistic = parse_mcs_statistic(get_as<std::string>(m["statistic"], "mcs.statistic"));
        }
    }
    if (root.contains("nemenyi")) {
        check_keys(root["nemenyi"], "nemenyi", {"alpha"});
        if (root["nemenyi"].contains("alpha")) {
            cfg.nemenyi_alpha = get_as<double>(root["nemenyi"]["alpha"], "nemenyi.alpha");
        }
    }
    if (root.contains("seed")) {
        const auto& s = root["seed"];
        if (!s.is_number_unsigned()) {
            throw ConfigError("seed must be a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    if (root.contains("sub_periods")) {
        for (const auto& p : root["sub_periods"]) {
            check_keys(p, "sub_periods[]", {"label", "first", "last"});
            SubPeriod sp{get_as<std::string>(p.value("label", Json()), "sub_periods.label"),
                         get_as<std::string>(p.value("first", Json()), "sub_periods.first"),
                         get_as<std::string>(p.value("last", Json()), "sub_periods.last")};
            if (!valid_date(sp.first) || !valid_date(sp.last) || sp.last < sp.first) {
                throw ConfigError("sub-period " + sp.label + " needs ISO dates first <= last");
            }
            cfg.sub_periods.push_back(std::move(sp));
        }
    }
    if (root.contains("shrinkage")) {
        check_keys(root["shrinkage"], "shrinkage", {"lambda"});
        if (root["shrinkage"].contains("lambda")) {
            const double lambda = get_as<double>(root["shrinkage"]["lambda"], "shrinkage.lambda");
            if (!(lambda >= 0.0 && lambda <= 1.0)) {
                throw ConfigError("shrinkage.lambda must lie in [0, 1]");
            }
            cfg.forced_lambda = lambda;
        }
    }
    if (root.contains("floor")) {
        cfg.floor_epsilon = get_as<double>(root["floor"], "floor");
        if (!(cfg.floor_epsilon > 0.0)) {
            throw ConfigError("floor must be positive");
        }
    }
    if (root.contains("jobs")) {
        cfg.jobs = get_size(root["jobs"], "jobs");
    }
    cfg.validate();
    return spec;
}

RunSpec load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open configuration " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.parent_path());
}

std::string config_snapshot(const RunSpec& spec) {
    const auto& cfg = spec.experiment;
    OrderedJson j;
    j["assets"] = cfg.assets;
    OrderedJson data;
    switch (spec.data.kind) {
    case DataSource::Kind::Synthetic:
        data["source"] = "synthetic";
        data["days"] = spec.data.days;
        break;
    case DataSource::Kind::Panels:
        data["source"] = "panels";
        break;
    case DataSource::Kind::Nodes:
        data["source"] = "nodes";
        break;
    }
    if (!spec.data.files.empty()) {
        OrderedJson files;
        for (const auto& [asset, path] : spec.data.files) {
            files[asset] = path.string();
        }
        data["files"] = files;
    }
    j["data"] = data;
    std::vector<std::string> procs;
    for (auto p : cfg.procedures) {
        procs.emplace_back(procedure_name(p));
    }
    j["procedures"] = procs;
    j["horizons"] = cfg.horizons;
    j["window"] = cfg.window;
    j["step"] = cfg.step;
    j["alphas"] = cfg.alphas;
    j["hierarchy"] = {{"TSV", cfg.tsv_hierarchy}, {"TPV3", cfg.tpv3_hierarchy}};
    std::vector<std::string> losses;
    for (auto l : cfg.losses) {
        losses.emplace_back(loss_kind_name(l));
    }
    j["losses"] = losses;
    j["qlike"] = {{"mode", cfg.qlike_mode == QlikeMode::Standard ? "standard" : "literal"}};
    j["bootstrap"] = {{"n", cfg.mcs.n_boot}, {"block", cfg.mcs.block_length}};
    j["mcs"] = {{"alpha", cfg.mcs.alpha},
                {"statistic", cfg.mcs.statistic == McsStatistic::Range ? "range" : "max"}};
    j["nemenyi"] = {{"alpha", cfg.nemenyi_alpha}};
    j["seed"] = cfg.seed;
    OrderedJson periods = OrderedJson::array();
    for (const auto& p : cfg.sub_periods) {
        periods.push_back({{"label", p.label}, {"first", p.first}, {"last", p.last}});
    }
    j["sub_periods"] = periods;
    if (cfg.forced_lambda) {
        j["shrinkage"] = {{"lambda", *cfg.forced_lambda}};
    }
    j["floor"] = cfg.floor_epsilon;
    return j.dump(2);
}

IntradayPanel synthetic_asset_panel(std::uint64_t master_seed, std::size_t index,
                                    std::size_t days, const std::string& asset_id) {
    const auto data_seed = derive_seed(master_seed, 0x5EEDDA7AULL);
    return synthetic_panel(derive_seed(data_seed, index), days, asset_id);
}

std::vector<AssetData> load_assets(const RunSpec& spec) {
    const auto& cfg = spec.experiment;
    const auto names = cfg.hierarchies();
    std::vector<AssetData> out;
    out.reserve(cfg.assets.size());
    for (std::size_t i = 0; i < cfg.assets.size(); ++i) {
        const auto& asset = cfg.assets[i];
        switch (spec.data.kind) {
        case DataSource::Kind::Synthetic: {
            const auto panel = synthetic_asset_panel(cfg.seed, i, spec.data.days, asset);
            out.push_back(asset_data_from_panel(panel, names, cfg.alphas));
            break;
        }
        case DataSource::Kind::Panels: {
            const auto& path = spec.data.files.at(asset);
            if (!std::filesystem::exists(path)) {
                throw DataError("data file not found: " + path.string());
            }
            const auto panel = read_panel_csv(path, asset);
            out.push_back(asset_data_from_panel(panel, names, cfg.alphas));
            break;
        }
        case DataSource::Kind::Nodes: {
            const auto& path = spec.data.files.at(asset);
            if (!std::filesystem::exists(path)) {
                throw DataError("data file not found: " + path.string());
            }
            out.push_back(read_node_series_csv(path, asset));
            break;
        }
        }
        logger()->info("asset {}: {} days", asset, out.back().size());
    }
    return out;
}

} // namespace rvrecon
