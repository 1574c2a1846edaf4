#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvrecon/experiment.hpp"
#include "rvrecon/hierarchy.hpp"
#include "rvrecon/rv_core.hpp"

namespace rvrecon {

struct DayStatus {
    std::string date;
    std::size_t prices = 0;
    bool accepted = false;
    std::string reason;               // why a day was skipped
    std::vector<std::string> flags;   // rejected rows inside the day
};

struct IngestResult {
    IntradayPanel panel;
    std::vector<DayStatus> days;
};

/**
 * Reads "timestamp,price" rows (timestamp "YYYY-MM-DD HH:MM[:SS]", a 'T'
 * separator is accepted; an optional header line is skipped). Rows are
 * grouped by date and sorted by time. A repeated timestamp rejects the later
 * row and flags the day. Days with other than grid_size + 1 prices are
 * skipped as "short day" / "long day". Unparseable rows or non-positive
 * prices raise DataError listing the offending line numbers.
 */
IngestResult ingest_prices(std::istream& in, const std::string& source,
                           const std::string& asset_id, std::size_t grid_size = kDefaultGridSize);
IngestResult ingest_prices(const std::filesystem::path& path, const std::string& asset_id,
                           std::size_t grid_size = kDefaultGridSize);

/// Panel file: header "date,r1,...,rN", one row of returns per day.
void write_panel_csv(const std::filesystem::path& path, const IntradayPanel& panel);
IntradayPanel read_panel_csv(const std::filesystem::path& path, const std::string& asset_id);

/// Node series file: header "date,<label>,...", one row per day.
void write_node_series_csv(const std::filesystem::path& path, const NodeSeriesSet& nodes);
/// Writes the columns of `data` in `order` (all series in label order when empty).
void write_asset_csv(const std::filesystem::path& path, const AssetData& data,
                     std::span<const std::string> order = {});
AssetData read_node_series_csv(const std::filesystem::path& path, const std::string& asset_id);

struct DataSource {
    enum class Kind { Synthetic, Panels, Nodes };
    Kind kind = Kind::Synthetic;
    std::map<std::string, std::filesystem::path> files;  // asset -> file
    std::size_t days = 1200;
};

struct RunSpec {
    ExperimentConfig experiment;
    DataSource data;
};

/**
 * JSON run configuration. Nested ("bootstrap": {"n": 1000}) and dotted
 * ("bootstrap.n": 1000) keys are equivalent; unknown keys raise ConfigError.
 * Relative data paths are resolved against `base_dir`.
 */
RunSpec parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunSpec load_run_config(const std::filesystem::path& path);

/// Normalized JSON of the effective configuration (defaults filled in). The
/// worker count is left out since it does not affect results.
std::string config_snapshot(const RunSpec& spec);

/// Intraday panel of the index-th synthetic asset under a master seed.
IntradayPanel synthetic_asset_panel(std::uint64_t master_seed, std::size_t index,
                                    std::size_t days, const std::string& asset_id);

/// Materializes every configured asset: synthetic panels seeded from the
/// master seed, panel files, or node-series files. A missing file raises
/// DataError naming it.
std::vector<AssetData> load_assets(const RunSpec& spec);

} // namespace rvrecon
