#include "manifest.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "rvrecon/error.hpp"

namespace rvrecon::cli {

namespace {

using MdCtx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

MdCtx new_context() {
    MdCtx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 initialisation failed");
    }
    return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) {
        throw Error("SHA-256 finalisation failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    constexpr char digits[] = "0123456789abcdef";
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(digits[md[i] >> 4]);
        hex.push_back(digits[md[i] & 0xf]);
    }
    return hex;
}

} // namespace

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    auto ctx = new_context();
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        const auto got = in.gcount();
        if (got > 0) {
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
        }
    }
    return finish(ctx.get());
}

std::string sha256_text(const std::string& text) {
    auto ctx = new_context();
    EVP_DigestUpdate(ctx.get(), text.data(), text.size());
    return finish(ctx.get());
}

std::string utc_timestamp() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    const auto days = std::chrono::floor<std::chrono::days>(now);
    const std::chrono::year_month_day ymd{days};
    const std::chrono::hh_mm_ss hms{now - days};
    std::array<char, 32> out{};
    std::snprintf(out.data(), out.size(), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return out.data();
}

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& paths,
                                     const std::filesystem::path& relative_to) {
    std::vector<FileDigest> out;
    out.reserve(paths.size());
    for (const auto& p : paths) {
        const auto shown = relative_to.empty() ? p : p.lexically_relative(relative_to);
        out.push_back({shown.generic_string(), sha256_file(p)});
    }
    return out;
}

nlohmann::ordered_json to_json(const std::vector<FileDigest>& digests) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : digests) {
        arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
    }
    return arr;
}

} // namespace rvrecon::cli
