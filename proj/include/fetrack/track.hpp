#pragma once

#include <span>
#include <vector>

#include "fetrack/correspond.hpp"
#include "fetrack/optim.hpp"
#include "fetrack/simplify.hpp"
#include "fetrack/xform.hpp"

namespace fetrack {

struct TrackConfig {
  double w_data = 1.0;
  double w_sm_init = 100.0;
  double w_sm_floor = 20.0;
  double rel_stop = 1e-4;
  /// A converged solve whose relative decrease falls below this halves w_sm.
  double halve_below = 0.005;
  /// Re-solves with fresh correspondences at one w_sm before forcing a halving.
  /// 0 refreshes correspondences only when w_sm changes.
  int max_resolves = 0;
  double d = 5.0;
  double alpha_deg = 60.0;
  double s_sm = 1.5;
  bool post_process = true;
  double post_ratio = 2.0;
  int max_iters = 1000;
  int rigid_max_rounds = 50;
  double refit_w_data = 1.0;
  double refit_w_sm = 20.0;
  /// Whether the rotation axes are optimized. E_sm does not see the axes,
  /// so with free axes a uniform (t, phi) can reach many displacement
  /// fields at no smoothness cost; fixed axes stay at their initial value.
  bool optimize_axes = false;
  /// Same for the rotation angles: a uniform shift of phi costs nothing in
  /// E_sm, and L-BFGS wanders along it. Off means translation-only fields.
  bool optimize_angle = false;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Neighborhoods for the smoothness term with the 1/|R| normalization and
/// reverse lists (rev[k] = {i : k in nbrs[i]}) for gathering gradients.
struct SmoothnessGraph {
  std::vector<std::vector<int>> nbrs;
  std::vector<std::vector<int>> rev;
  std::vector<double> inv_size;  // 0 for an empty neighborhood
};

SmoothnessGraph make_smoothness_graph(const TriMesh& rest, double radius);

/// sum_i 1/|R_i| sum_j (|t_i - t_j|^2 + angle_difference(phi_i, phi_j))
double smoothness_energy(const SmoothnessGraph& g, const DeformField& field);

/// sum_i omega_i <p'_i - N_i, n_i>^2 with p'_i the deformed vertex.
double data_energy(std::span<const Vec3> anchors, const DeformField& field, const Correspondence& corr);

struct RigidReport {
  int rounds = 0;
  double energy = 0.0;
  int observed = 0;
};

/// Point-to-plane similarity fit of the template to a frame, re-matching
/// until the relative energy change drops below cfg.rel_stop.
SimilarityTransform rigid_align(const TriMesh& tmpl, const PointCloudFrame& frame, const TrackConfig& cfg,
                                RigidReport* report = nullptr);

/// E_initial for a given similarity and fixed correspondences, with gradient
/// w.r.t. (log scale, rotation vector, translation). Exposed for testing.
double rigid_energy(const TriMesh& tmpl, const Correspondence& corr, const Eigen::Matrix<double, 7, 1>& x,
                    Eigen::Matrix<double, 7, 1>* grad);

struct StageLog {
  int level = 0;
  double w_sm = 0.0;
  double e_start = 0.0;
  double e_end = 0.0;
  int iterations = 0;
  int observed = 0;
  Termination reason = Termination::Gradient;
};

struct TrackResult {
  DeformField field;
  std::vector<char> observed;  // omega at the last correspondence refresh
  std::vector<StageLog> stages;
};

/// Per-level data derived once from the (aligned) rest template and its
/// hierarchy.
class Tracker {
 public:
  Tracker(const TriMesh& rest, const ResolutionHierarchy& hierarchy, const TrackConfig& cfg);

  /// Tracks one frame. `base` is the template deformed to the previous
  /// frame (the rest template for the first one); the returned field starts
  /// from identity and is relative to `base`.
  TrackResult track(const TriMesh& base, const PointCloudFrame& frame) const;

  const TriMesh& rest() const { return levels_.back().mesh; }
  const SmoothnessGraph& finest_graph() const { return levels_.back().graph; }
  const TrackConfig& config() const { return cfg_; }
  std::size_t level_count() const { return levels_.size(); }

 private:
  struct Level {
    TriMesh mesh;                 // level topology at rest-template positions; r and graph come from it
    std::vector<int> finest;      // level vertex -> finest vertex
    std::vector<int> coarser;     // level vertex -> coarser-level vertex or -1
    SmoothnessGraph graph;
    double r = 0.0;
  };

  DeformField track_level(const Level& lv, const TriMesh& mesh, DeformField field, const PointCloudFrame& frame,
                          const KdTree& tree, TrackResult& out, int level_index) const;

  TrackConfig cfg_;
  std::vector<Level> levels_;
};

TrackResult track_frame(const Tracker& tracker, const TriMesh& base, const PointCloudFrame& frame);

/// Replaces the transform of every vertex whose deformed distance to all of
/// its one-ring neighbors grew by more than `threshold` with the average of
/// its neighbors. Single pass over a read-only copy. Indices of modified
/// vertices go to `changed` when given.
DeformField post_process(const TriMesh& rest, const DeformField& field, double threshold = 2.0,
                         std::vector<int>* changed = nullptr);

/// Fits the parameters of unobserved vertices (observed[i] == 0) so the
/// deformed template reaches `targets`, with smoothness coupling to the
/// frozen observed vertices.
DeformField refit_unobserved(const TriMesh& rest, const SmoothnessGraph& graph, const DeformField& field,
                             std::span<const Vec3> targets, std::span<const char> observed, const TrackConfig& cfg);

/// Sets t and angle of the vertices flagged in `unknown` by minimizing the
/// smoothness energy with all other vertices fixed; axes of unknown
/// vertices are reset to `axes`.
DeformField propagate_smooth(const SmoothnessGraph& graph, std::span<const Vec3> anchors, DeformField field,
                             std::span<const char> unknown, std::span<const Vec3> axes, int max_iters = 1000);

}  // namespace fetrack
