#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/rng.hpp"

namespace ranrec {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

inline std::string file_hash(const std::filesystem::path& path) {
  return content_hash(read_text_file(path));
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path() && !std::filesystem::exists(path.parent_path()))
    throw ValidationError(path.string() + ": parent directory does not exist");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(tmp.string() + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw Error(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(path.string() + ": rename failed: " + ec.message());
  }
}

inline std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

struct FileDigest {
  std::string path;
  std::string hash;
};

/// Record of one command run, written beside each output.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string started_at;

  void add_input(const std::filesystem::path& p) { inputs.push_back({p.string(), file_hash(p)}); }
  void add_output(const std::filesystem::path& p, const std::string& content) {
    outputs.push_back({p.string(), content_hash(content)});
  }
};

inline json manifest_to_json(const RunManifest& m) {
  auto digests = [](const std::vector<FileDigest>& v) {
    json arr = json::array();
    for (const auto& d : v) arr.push_back({{"path", d.path}, {"fnv1a64", d.hash}});
    return arr;
  };
  return {{"command", m.command},       {"config", m.config},
          {"inputs", digests(m.inputs)}, {"outputs", digests(m.outputs)},
          {"seed", m.seed},             {"wall_seconds", m.wall_seconds},
          {"started_at", m.started_at}};
}

inline std::filesystem::path manifest_path(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".manifest.json";
  return p;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ranrec
