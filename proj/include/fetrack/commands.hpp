#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fetrack/manifest.hpp"

namespace fetrack {

/// Command-line overrides applied on top of a manifest.
struct TrackOverrides {
  std::optional<bool> fem;
  std::optional<bool> post_process;
  std::optional<double> s_sm, w_sm_init, w_sm_floor, d, alpha_deg;
  std::optional<int> ell;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;

  void apply(RunManifest& m) const;
};

/// Writes template.ply, tet.node/.ele, truth_tet.node/.ele, contacts.txt,
/// frames/cloud_%04d.ply, truth/truth_%04d.ply, truth/visible_%04d.txt,
/// scenario.json and manifest.json into `out_dir`.
void cmd_generate(const SynthScenario& scn, const std::filesystem::path& out_dir);

/// Runs the pipeline; per-frame outputs are flushed as frames complete.
/// Throws on any error (FrameError names the failed frame).
void cmd_track(const RunManifest& manifest, std::ostream* progress = nullptr);

struct EvalRow {
  int frame = 0;
  double mean = 0.0, max = 0.0;
  double unseen_mean = 0.0, unseen_max = 0.0;
  int unseen_count = 0;
  double volume = 0.0, area = 0.0;
};

/// Compares results_dir/frame_%04d.ply with truth_dir/truth_%04d.ply.
/// The unseen set is the complement of truth_dir/visible_%04d.txt, or of
/// results_dir/mask_%04d.txt when the former is missing. Writes `out_csv`
/// (frame rows plus a summary row) and returns the frame rows.
std::vector<EvalRow> cmd_eval(const std::filesystem::path& results_dir, const std::filesystem::path& truth_dir,
                              const std::filesystem::path& out_csv);

/// Simplifies a mesh to `target` vertices.
void cmd_simplify(const std::filesystem::path& in, const std::filesystem::path& out, int target, std::ostream& log);

/// Writes every hierarchy level as level_%02d.ply (coarsest first).
void cmd_hierarchy(const std::filesystem::path& in, const std::filesystem::path& out_dir, int base, std::ostream& log);

/// Reports tet mesh statistics and the rigid-body null space check.
/// Returns false if the mesh fails a check.
bool cmd_fem_check(const std::filesystem::path& stem, std::ostream& log);

std::string frame_name(const std::string& prefix, int frame, const std::string& ext);

}  // namespace fetrack
