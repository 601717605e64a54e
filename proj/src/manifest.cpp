// SPDX-License-Identifier: Apache-2.0

#include "linmark/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

std::uint64_t fnv1a_bytes(const char* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

using nlohmann::json;

}  // namespace

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
    if (!in) break;
  }
  return hex64(h);
}

std::string text_digest(std::string_view text) {
  return hex64(fnv1a_bytes(text.data(), text.size(), 1469598103934665603ULL));
}

namespace {

json manifest_to_json(const RunManifest& m, bool with_timestamp) {
  json j{{"run_id", m.run_id},    {"command", m.command},
         {"strategy", m.strategy}, {"seed", m.seed},
         {"config", m.config},     {"input_digests", m.input_digests},
         {"outputs", m.outputs},   {"metrics", m.metrics}};
  if (with_timestamp) j["created_at"] = m.created_at;
  return j;
}

}  // namespace

std::string RunManifest::content_digest() const {
  return text_digest(manifest_to_json(*this, false).dump());
}

void save_manifest(const std::filesystem::path& registry_dir, const RunManifest& m) {
  std::filesystem::create_directories(registry_dir);
  json j = manifest_to_json(m, true);
  j["content_digest"] = m.content_digest();
  std::ofstream out(registry_dir / (m.run_id + ".json"));
  if (!out) {
    throw ValidationError("cannot write manifest for run " + m.run_id);
  }
  out << j.dump(2) << '\n';
}

RunManifest load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifactError("cannot read manifest " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + file.string() + ": " + e.what());
  }
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.strategy = j.value("strategy", "");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.value("config", json::object());
  if (j.contains("input_digests")) {
    m.input_digests =
        j.at("input_digests").get<std::map<std::string, std::string>>();
  }
  if (j.contains("outputs")) {
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
  }
  if (j.contains("metrics")) {
    m.metrics = j.at("metrics").get<std::map<std::string, double>>();
  }
  m.created_at = j.value("created_at", "");
  return m;
}

std::vector<RunManifest> load_registry(const std::filesystem::path& registry_dir) {
  std::vector<RunManifest> out;
  if (!std::filesystem::exists(registry_dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(registry_dir)) {
    if (entry.path().extension() == ".json") {
      out.push_back(load_manifest(entry.path()));
    }
  }
  std::sort(out.begin(), out.end(), [](const RunManifest& a, const RunManifest& b) {
    return a.run_id < b.run_id;
  });
  return out;
}

std::optional<RunManifest> best_evaluated_run(
    const std::filesystem::path& registry_dir) {
  std::optional<RunManifest> best;
  for (auto& m : load_registry(registry_dir)) {
    const auto it = m.metrics.find("macro_f1");
    if (m.command != "evaluate" || it == m.metrics.end()) continue;
    if (!best || it->second > best->metrics.at("macro_f1")) best = std::move(m);
  }
  return best;
}

std::optional<RunManifest> latest_run(const std::filesystem::path& registry_dir,
                                      const std::string& command,
                                      const std::string& strategy) {
  std::optional<RunManifest> latest;
  for (auto& m : load_registry(registry_dir)) {
    if (m.command != command) continue;
    if (!strategy.empty() && m.strategy != strategy) continue;
    if (!latest || m.created_at > latest->created_at ||
        (m.created_at == latest->created_at && m.run_id > latest->run_id)) {
      latest = std::move(m);
    }
  }
  return latest;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace linmark
