#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biphoton/errors.hpp"
#include "biphoton/version.hpp"

namespace biphoton {

/// Writes a file atomically: the content lands under a temporary name in the
/// same directory and is renamed into place.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw data_error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw data_error("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw data_error("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

/// Record of one CLI run: the command, the fully resolved configuration, and
/// the seed. Re-running a seeded manifest reproduces the outputs
/// bit-identically.
struct RunManifest {
  std::string command;
  std::string version = version_string;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> config;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;

  std::string to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = version;
    if (seed)
      j["seed"] = *seed;
    else
      j["seed"] = nullptr;
    j["config"] = config;
    j["outputs"] = outputs;
    j["duration_seconds"] = duration_seconds;
    return j.dump(2) + "\n";
  }

  static RunManifest from_json(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string("invalid manifest JSON: ") + e.what());
    }
    RunManifest m;
    try {
      m.command = j.at("command").get<std::string>();
      m.version = j.value("version", std::string());
      if (j.contains("seed") && !j["seed"].is_null())
        m.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("config"))
        m.config = j["config"].get<std::map<std::string, std::string>>();
      if (j.contains("outputs")) m.outputs = j["outputs"].get<std::vector<std::string>>();
      m.duration_seconds = j.value("duration_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string("malformed manifest: ") + e.what());
    }
    return m;
  }

  static RunManifest load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open manifest '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
  }

  void write(const std::filesystem::path& path) const { atomic_write_file(path, to_json()); }
};

/// Manifest path convention: alongside the output, with .manifest.json
/// appended to the stem.
inline std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".manifest.json";
  return p;
}

}  // namespace biphoton
