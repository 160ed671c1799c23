#ifndef MIDTUNE_MANIFEST_HPP
#define MIDTUNE_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "midtune/errors.hpp"

namespace midtune {

inline constexpr const char* kToolVersion = "0.1.0";

// Provenance record written next to every output artifact. Re-running the
// subcommand with the recorded config reproduces the artifact bit-exactly.
struct RunManifest {
    std::string subcommand;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["seed"] = seed;
        j["tool_version"] = kToolVersion;
        j["wall_ms"] = wall_ms;
        return j;
    }
};

// Atomic write: temp file in the same directory, then rename over the target.
inline void write_manifest(const std::string& artifact_path, const RunManifest& manifest) {
    std::string path = artifact_path + ".manifest.json";
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write manifest: " + tmp);
        out << manifest.to_json().dump(2) << '\n';
        if (!out) throw IoError("short write on manifest: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move manifest into place: " + path + " (" + ec.message() + ")");
}

}  // namespace midtune

#endif  // MIDTUNE_MANIFEST_HPP
