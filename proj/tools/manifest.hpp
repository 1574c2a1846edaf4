#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rvrecon::cli {

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

/// UTC, second resolution, e.g. 2024-01-31T12:00:00Z.
std::string utc_timestamp();

struct FileDigest {
    std::string path;
    std::string sha256;
};

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& paths,
                                     const std::filesystem::path& relative_to = {});

nlohmann::ordered_json to_json(const std::vector<FileDigest>& digests);

} // namespace rvrecon::cli
