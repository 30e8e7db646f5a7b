#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fetrack/fem.hpp"
#include "fetrack/track.hpp"

namespace fetrack {

struct Contact {
  int vertex = 0;  // template vertex
  Vec3 direction = Vec3::Zero();
};
using ContactSpec = std::vector<Contact>;

/// Lines `vertex_index fx fy fz`; directions are normalized (zero stays zero).
ContactSpec load_contacts(const std::filesystem::path& path);
void save_contacts(const ContactSpec& contacts, const std::filesystem::path& path);

struct PipelineConfig {
  TrackConfig track;
  bool fem = true;
  int ell = 3;
  /// Used only if the very first material estimate is degenerate.
  Material initial_material{1.0, 0.3, false};
  /// Tet surface nodes must coincide with template vertices within this
  /// fraction of the template bounding-box diagonal.
  double coincide_tol = 1e-6;

  void validate() const;
};

/// Algorithm input for one frame, expressed on tet nodes.
struct DisplaceInput {
  const TetMesh* prev = nullptr;             // rest state: previous deformed tet
  std::span<const Vec3> tracked;             // per node; used at surface nodes
  std::span<const char> observed;            // per node
  std::span<const std::pair<int, Vec3>> contacts;  // (node, unit direction)
  int ell = 3;
};

struct DisplaceResult {
  VecX u;            // full displacement, 3 per node
  VecX u_init;       // surface tracking + interior diffusion
  VecX forces;       // last A2 forces with known entries kept
  Material material;
  bool material_fallback = false;
};

/// Predicts displacements of unobserved and interior nodes from the observed
/// ones. `fallback` replaces a degenerate material estimate. Throws
/// FemError if fewer than 3 nodes are observed.
DisplaceResult displace_unobserved(const DisplaceInput& in, const Material& fallback);

struct FrameState {
  int frame = 0;
  TriMesh mesh;                 // deformed template
  TetMesh tet;                  // deformed tet mesh (empty without FEM)
  DeformField field;            // relative to the previous frame's mesh
  std::vector<char> observed;
  std::optional<Material> material;
  bool material_fallback = false;
  VecX forces;
  bool fem_applied = false;
  std::vector<int> post_changed;
  std::vector<StageLog> stages;
};

class FrameError : public std::runtime_error {
 public:
  FrameError(int frame, const std::string& what)
      : std::runtime_error("frame " + std::to_string(frame) + ": " + what), frame_(frame) {}
  int frame() const { return frame_; }

 private:
  int frame_;
};

/// Everything fixed for a sequence: the aligned template and tet, the
/// hierarchy, the tet-to-template maps and the contact nodes.
class Pipeline {
 public:
  /// Rigidly aligns `tmpl` (and `tet`) to `first_frame`. `tet` may be null
  /// when FEM is disabled.
  Pipeline(const TriMesh& tmpl, const TetMesh* tet, const ContactSpec& contacts, const PipelineConfig& cfg,
           const PointCloudFrame& first_frame);

  FrameState initial_state() const;
  FrameState run_frame(const FrameState& prev, const PointCloudFrame& frame) const;

  const SimilarityTransform& alignment() const { return alignment_; }
  const TriMesh& rest() const { return tracker_->rest(); }
  const Tracker& tracker() const { return *tracker_; }
  const TetMesh& rest_tet() const { return tet0_; }
  const std::vector<int>& node_to_template() const { return node_to_template_; }
  const std::vector<std::pair<int, Vec3>>& contact_nodes() const { return contact_nodes_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  SimilarityTransform alignment_;
  std::unique_ptr<Tracker> tracker_;
  TetMesh tet0_;
  bool use_fem_ = false;
  std::vector<int> node_to_template_;
  std::vector<EmbeddedPoint> embedding_;
  std::vector<std::pair<int, Vec3>> contact_nodes_;
};

using FrameCallback = std::function<void(const FrameState&)>;

/// Runs all frames in order; `on_frame` sees each state as soon as it is
/// done. Errors are rethrown as FrameError naming the frame.
std::vector<FrameState> run_sequence(const TriMesh& tmpl, const TetMesh* tet, std::span<const PointCloudFrame> frames,
                                     const ContactSpec& contacts, const PipelineConfig& cfg,
                                     const FrameCallback& on_frame = {});

}  // namespace fetrack
