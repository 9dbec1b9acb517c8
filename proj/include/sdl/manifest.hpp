#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdl/error.hpp"

namespace sdl {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a, 64 bit, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_digest(const std::string& path) { return fnv1a_hex(read_file(path)); }

struct ManifestInput {
  std::string path;
  std::string digest;
  bool operator==(const ManifestInput&) const = default;
};

struct RunManifest {
  std::string command;
  // Role -> file (network, dataset, config, scenario, report.N, ...).
  std::map<std::string, ManifestInput> inputs;
  std::optional<std::uint64_t> seed;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  // Outputs sit next to the manifest.
  std::string output_directory = ".";

  void add_input(const std::string& role, const std::string& path) {
    auto abs = std::filesystem::absolute(path).lexically_normal().string();
    inputs[role] = {abs, file_digest(abs)};
  }
};

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "sdl";
  j["version"] = kToolVersion;
  j["command"] = m.command;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [role, f] : m.inputs) in[role] = {{"path", f.path}, {"fnv1a64", f.digest}};
  j["inputs"] = std::move(in);
  j["seed"] = m.seed ? nlohmann::ordered_json(*m.seed) : nlohmann::ordered_json(nullptr);
  j["parameters"] = m.parameters;
  j["output_directory"] = m.output_directory;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::ordered_json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    for (const auto& [role, f] : j.at("inputs").items())
      m.inputs[role] = {f.at("path").get<std::string>(), f.at("fnv1a64").get<std::string>()};
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.parameters = j.at("parameters");
    m.output_directory = j.value("output_directory", std::string("."));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  if (m.command.empty()) throw InputError("manifest: empty command");
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::ofstream out(dir / kManifestName, std::ios::binary);
  if (!out) throw InputError("cannot write manifest in '" + dir.string() + "'");
  out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
  try {
    return manifest_from_json(nlohmann::ordered_json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// Inputs whose bytes no longer match the recorded digest.
inline std::vector<std::string> stale_inputs(const RunManifest& m) {
  std::vector<std::string> out;
  for (const auto& [role, f] : m.inputs) {
    std::ifstream probe(f.path, std::ios::binary);
    if (!probe || file_digest(f.path) != f.digest) out.push_back(role + " (" + f.path + ")");
  }
  return out;
}

}  // namespace sdl
