#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fetrack/complete.hpp"
#include "fetrack/synth.hpp"

namespace fetrack {

/// Everything `track` needs. Relative paths in a manifest file are resolved
/// against the manifest's directory on load.
struct RunManifest {
  std::filesystem::path template_path;
  std::filesystem::path tet_stem;  // `<stem>.node` / `<stem>.ele`; empty = none
  std::vector<std::filesystem::path> frames;
  std::filesystem::path contacts;  // empty = no contacts
  std::vector<std::filesystem::path> truth;  // optional, for metrics.csv
  std::filesystem::path output_dir = "out";
  bool prescale = true;
  PipelineConfig pipeline;
  std::uint64_t seed = 1;

  /// Checks config bounds, and with `check_files` that every path exists.
  void validate(bool check_files = true) const;
  bool operator==(const RunManifest& o) const;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunManifest load_manifest(const std::filesystem::path& path);
/// Paths are written as given.
void save_manifest(const RunManifest& m, const std::filesystem::path& path);
std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text, const std::filesystem::path& base_dir = {});

SynthScenario load_scenario(const std::filesystem::path& path);
void save_scenario(const SynthScenario& s, const std::filesystem::path& path);
std::string scenario_to_json(const SynthScenario& s);
SynthScenario scenario_from_json(const std::string& text);

bool operator==(const TrackConfig& a, const TrackConfig& b);
bool operator==(const PipelineConfig& a, const PipelineConfig& b);

}  // namespace fetrack
