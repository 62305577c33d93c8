#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace mre {

inline constexpr const char* kToolVersion = "mre 0.1.0";

// Content fingerprint (FNV-1a 64) of a file, hex encoded.
std::string file_hash_hex(const std::string& path);

// One manifest per train/eval/bench run: the fully resolved configuration,
// seed, input-file hashes, tool version and timestamps. Re-running the
// same command on the same inputs reproduces the hashed outputs bitwise;
// the manifest itself carries the timestamps and is not hashed content.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;  // resolved key=value pairs
    std::map<std::string, std::string> inputs;  // path -> content hash
    std::map<std::string, std::string> outputs; // path -> content hash
    std::string started_at;
    std::string finished_at;
};

std::string iso_timestamp_now();

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace mre
