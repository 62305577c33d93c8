#include "mre/manifest.hpp"

#include "mre/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mre {

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf.str())));
    return out;
}

std::string iso_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::json j;
    j["tool"] = kToolVersion;
    j["command"] = manifest.command;
    j["seed"] = manifest.seed;
    j["config"] = manifest.config;
    j["inputs"] = manifest.inputs;
    j["outputs"] = manifest.outputs;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mre
