#pragma once

// Run manifests: what was run, on which inputs, producing which outputs.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace topiclens::cli {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class RunManifest {
 public:
  RunManifest(std::string command, std::string version) {
    doc_["tool"] = "topiclens";
    doc_["version"] = std::move(version);
    doc_["command"] = std::move(command);
    doc_["started_at"] = utc_timestamp();
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
    doc_["config"] = nlohmann::json::object();
  }

  nlohmann::json& config() { return doc_["config"]; }

  void add_input(const std::filesystem::path& path) {
    doc_["inputs"].push_back({{"path", path.string()}, {"fnv1a64", hex64(fnv1a64_file(path))}});
  }

  void add_output(const std::filesystem::path& path) { doc_["outputs"].push_back(path.string()); }

  /// Stamps the finish time and a hash of the config block, then writes JSON.
  void write(const std::filesystem::path& path) {
    doc_["config_hash"] = hex64(fnv1a64(doc_["config"].dump()));
    doc_["finished_at"] = utc_timestamp();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

  const nlohmann::json& json() const { return doc_; }

 private:
  nlohmann::json doc_;
};

}  // namespace topiclens::cli
