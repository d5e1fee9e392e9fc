#pragma once

// Run manifest: config hash, code version, per-stage timings, and an
// inventory of output files with content digests. Written at the end of every
// CLI command; verify_manifest re-hashes the inventory.

#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swapvae/errors.hpp"
#include "swapvae/sha256.hpp"

namespace swapvae {

inline constexpr const char* kCodeVersion = "0.1.0";

class RunManifest {
 public:
  explicit RunManifest(const nlohmann::json& config)
      : config_hash_(sha256_hex(config.dump())) {}

  class StageTimer {
   public:
    StageTimer(RunManifest& m, std::string name)
        : m_(m), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
      auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_);
      m_.timings_.push_back({name_, dt.count()});
    }

   private:
    RunManifest& m_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
  };

  StageTimer time_stage(const std::string& name) { return StageTimer(*this, name); }

  void add_file(const std::string& path) {
    files_.push_back({path, sha256_file(path)});
  }

  nlohmann::json to_json() const {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [path, digest] : files_)
      files.push_back({{"path", path}, {"sha256", digest}});
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [name, secs] : timings_) timings[name] = secs;
    return {{"config_hash", config_hash_},
            {"code_version", kCodeVersion},
            {"timings", timings},
            {"files", files}};
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }

 private:
  std::string config_hash_;
  std::vector<std::pair<std::string, double>> timings_;
  std::vector<std::pair<std::string, std::string>> files_;
};

// Re-hashes every file listed in a written manifest; throws on any mismatch.
inline void verify_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path);
  nlohmann::json m;
  in >> m;
  for (const auto& f : m.at("files")) {
    const auto p = f.at("path").get<std::string>();
    const auto want = f.at("sha256").get<std::string>();
    const auto got = sha256_file(p);
    if (got != want)
      throw data_error("manifest digest mismatch for " + p + ": " + got + " != " + want);
  }
}

}  // namespace swapvae
