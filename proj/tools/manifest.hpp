#pragma once

// Run manifests: config echo, git-style content hash and wall times.

#include <openssl/sha.h>

#include <array>
#include <cstdio>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cardiomr/error.hpp"
#include "cardiomr/scenario.hpp"

namespace cardiomr::cli {

using json = nlohmann::json;

inline constexpr int kManifestVersion = 1;

inline std::string sha1_hex(std::string_view data) {
    std::array<unsigned char, SHA_DIGEST_LENGTH> d{};
    SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), d.data());
    std::string out;
    out.reserve(2 * d.size());
    char buf[3];
    for (const unsigned char c : d) {
        std::snprintf(buf, sizeof buf, "%02x", c);
        out += buf;
    }
    return out;
}

/// Hash git assigns to a blob with this content.
inline std::string git_blob_sha1(std::string_view content) {
    std::string framed = "blob " + std::to_string(content.size());
    framed.push_back('\0');
    framed.append(content);
    return sha1_hex(framed);
}

/// Canonical serialization used for hashing (sorted keys, compact).
inline std::string canonical_config(const ScenarioConfig& c) { return to_json(c).dump(); }

inline json make_manifest(const std::string& command, const ScenarioConfig& c, const json& extra) {
    json m;
    m["manifest_version"] = kManifestVersion;
    m["command"] = command;
    m["config"] = to_json(c);
    m["config_sha1"] = git_blob_sha1(canonical_config(c));
    for (const auto& [k, v] : extra.items()) m[k] = v;
    return m;
}

inline bool is_manifest(const json& j) { return j.is_object() && j.contains("manifest_version"); }

/// Recovers the exact configuration of a manifest, checking its hash.
inline ScenarioConfig config_from_manifest(const json& m) {
    if (!m.contains("config") || !m.contains("config_sha1")) throw ConfigError("manifest lacks config or config_sha1");
    ScenarioConfig c = from_json(m.at("config"));
    const std::string h = git_blob_sha1(canonical_config(c));
    if (h != m.at("config_sha1").get<std::string>())
        throw ConfigError("manifest hash mismatch: recorded " + m.at("config_sha1").get<std::string>() +
                          ", recomputed " + h);
    return c;
}

}  // namespace cardiomr::cli
