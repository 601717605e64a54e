// SPDX-License-Identifier: Apache-2.0
//
// Run manifests and the report registry: a flat directory of JSON manifests,
// one per run, that makes every pipeline artifact traceable to the command,
// configuration, seed, and input digests that produced it.

#ifndef LINMARK_MANIFEST_HPP
#define LINMARK_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace linmark {

/// 64-bit FNV-1a over the file bytes; content fingerprint, not cryptographic.
std::string file_digest(const std::filesystem::path& path);
std::string text_digest(std::string_view text);

struct RunManifest {
  std::string run_id;
  std::string command;
  std::string strategy;  // empty when not applicable
  std::uint64_t seed = 0;
  nlohmann::json config;                              // snapshot
  std::map<std::string, std::string> input_digests;   // path -> digest
  std::vector<std::string> outputs;
  std::map<std::string, double> metrics;  // e.g. macro_f1 for evaluate runs
  std::string created_at;                 // ISO-8601, informational only

  /// Digest over everything except created_at, so identical reruns produce
  /// identical digests.
  std::string content_digest() const;
};

void save_manifest(const std::filesystem::path& registry_dir, const RunManifest& m);
RunManifest load_manifest(const std::filesystem::path& file);
std::vector<RunManifest> load_registry(const std::filesystem::path& registry_dir);

/// The evaluate run with the highest stored macro_f1, if any.
std::optional<RunManifest> best_evaluated_run(
    const std::filesystem::path& registry_dir);

/// Latest manifest for a command (+ optional strategy), by created_at then id.
std::optional<RunManifest> latest_run(const std::filesystem::path& registry_dir,
                                      const std::string& command,
                                      const std::string& strategy = "");

std::string now_iso8601();

}  // namespace linmark

#endif  // LINMARK_MANIFEST_HPP
