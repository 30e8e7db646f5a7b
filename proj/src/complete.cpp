#include "fetrack/complete.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fetrack/correspond.hpp"
#include "fetrack/log.hpp"
#include "fetrack/mesh_io.hpp"
#include "fetrack/tps.hpp"

namespace fetrack {

ContactSpec load_contacts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  ContactSpec out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    Contact c;
    if (!(s >> c.vertex >> c.direction.x() >> c.direction.y() >> c.direction.z()) || c.vertex < 0) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected `vertex fx fy fz`");
    }
    const double len = c.direction.norm();
    if (len > 0.0) c.direction /= len;
    out.push_back(c);
  }
  return out;
}

void save_contacts(const ContactSpec& contacts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const Contact& c : contacts) {
    out << c.vertex << ' ' << c.direction.x() << ' ' << c.direction.y() << ' ' << c.direction.z() << '\n';
  }
}

void PipelineConfig::validate() const {
  track.validate();
  if (ell < 1) throw std::invalid_argument("ell must be at least 1");
  if (!(coincide_tol > 0.0)) throw std::invalid_argument("coincide_tol must be positive");
  if (!(initial_material.E > 0.0) || initial_material.nu < kNuMin || initial_material.nu > kNuMax) {
    throw std::invalid_argument("initial material out of range");
  }
}

namespace {

// Surface displacement from tracking, interior displacement by TPS.
VecX initial_displacement(const TetMesh& prev, std::span<const Vec3> tracked) {
  const std::size_t m = prev.node_count();
  VecX u = VecX::Zero(3 * static_cast<Eigen::Index>(m));
  std::vector<Vec3> ctrl, disp;
  ctrl.reserve(prev.surface_nodes.size());
  disp.reserve(prev.surface_nodes.size());
  for (int i : prev.surface_nodes) {
    const Vec3 d = tracked[i] - prev.nodes[i];
    u.segment<3>(3 * i) = d;
    ctrl.push_back(prev.nodes[i]);
    disp.push_back(d);
  }
  if (prev.surface_nodes.size() == m) return u;
  const TpsModel tps = tps_fit(ctrl, disp);
  for (std::size_t i = 0; i < m; ++i) {
    if (!prev.surface[i]) u.segment<3>(3 * static_cast<Eigen::Index>(i)) = tps(prev.nodes[i]);
  }
  return u;
}

}  // namespace

DisplaceResult displace_unobserved(const DisplaceInput& in, const Material& fallback) {
  const TetMesh& prev = *in.prev;
  const std::size_t m = prev.node_count();
  if (in.tracked.size() != m || in.observed.size() != m) throw FemError("displace_unobserved: size mismatch");
  if (in.ell < 1) throw FemError("displace_unobserved: ell must be at least 1");

  std::vector<int> fixed;
  for (std::size_t i = 0; i < m; ++i) {
    if (prev.surface[i] && in.observed[i]) fixed.push_back(static_cast<int>(i));
  }
  if (fixed.size() < 3) throw FemError("displace_unobserved: fewer than 3 observed nodes");

  DisplaceResult res;
  res.u_init = initial_displacement(prev, in.tracked);

  // Known forces: contacts (unit directions) and interior nodes (zero).
  res.forces = VecX::Zero(3 * static_cast<Eigen::Index>(m));
  std::vector<char> initially_known(m, 0);
  for (std::size_t i = 0; i < m; ++i) initially_known[i] = !prev.surface[i];
  for (const auto& [node, dir] : in.contacts) {
    res.forces.segment<3>(3 * node) = dir;
    initially_known[node] = 1;
  }
  std::vector<int> known;
  for (std::size_t i = 0; i < m; ++i) {
    if (initially_known[i]) known.push_back(static_cast<int>(i));
  }

  const auto basis = std::make_shared<StiffnessBasis>(assemble_basis(prev));
  res.material = fallback;
  for (int it = 0; it < in.ell; ++it) {
    try {
      res.material = estimate_material(*basis, res.u_init, known, res.forces);
      res.material_fallback = false;
    } catch (const DegenerateEstimate& e) {
      log_warn(std::string(e.what()) + "; keeping previous material");
      res.material = fallback;
      res.material_fallback = true;
    }
    const VecX f = compute_forces(basis->assemble(res.material), res.u_init);
    for (std::size_t i = 0; i < m; ++i) {
      if (!initially_known[i]) res.forces.segment<3>(3 * i) = f.segment<3>(3 * i);
    }
    if (it == 0) {
      known.resize(m);
      for (std::size_t i = 0; i < m; ++i) known[i] = static_cast<int>(i);
    }
  }

  const StiffnessSystem sys(basis, res.material);
  std::vector<Vec3> disp(fixed.size());
  for (std::size_t k = 0; k < fixed.size(); ++k) disp[k] = res.u_init.segment<3>(3 * fixed[k]);
  res.u = sys.solve(fixed, disp, res.forces);
  return res;
}

Pipeline::Pipeline(const TriMesh& tmpl, const TetMesh* tet, const ContactSpec& contacts, const PipelineConfig& cfg,
                   const PointCloudFrame& first_frame)
    : cfg_(cfg) {
  cfg_.validate();
  first_frame.validate();
  RigidReport rr;
  alignment_ = rigid_align(tmpl, first_frame, cfg_.track, &rr);
  log_info("rigid alignment: " + std::to_string(rr.rounds) + " rounds, scale " + std::to_string(alignment_.scale));
  const TriMesh rest = apply_similarity(tmpl, alignment_);
  const ResolutionHierarchy h = build_hierarchy(tmpl);
  tracker_ = std::make_unique<Tracker>(rest, h, cfg_.track);

  use_fem_ = cfg_.fem;
  if (!use_fem_) return;
  if (!tet) throw FemError("FEM enabled but no tet mesh given");
  std::vector<Vec3> nodes(tet->node_count());
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = alignment_.apply(tet->nodes[i]);
  tet0_ = tet->with_nodes(std::move(nodes));
  node_to_template_ = match_surface_nodes(tet0_, rest.vertices(), cfg_.coincide_tol * rest.bbox_diagonal());
  embedding_ = embed_template(rest.vertices(), tet0_);

  // Contacts live on the template; the FEM needs them on tet surface nodes.
  std::vector<Vec3> surf;
  for (int i : tet0_.surface_nodes) surf.push_back(tet0_.nodes[i]);
  const KdTree tree(surf);
  for (const Contact& c : contacts) {
    if (c.vertex < 0 || c.vertex >= static_cast<int>(rest.vertex_count())) {
      throw FemError("contact vertex " + std::to_string(c.vertex) + " out of range");
    }
    const int node = tet0_.surface_nodes[tree.nearest(rest.vertices()[c.vertex])];
    contact_nodes_.emplace_back(node, alignment_.rotation_matrix() * c.direction);
  }
}

FrameState Pipeline::initial_state() const {
  FrameState s;
  s.frame = 0;
  s.mesh = tracker_->rest();
  s.tet = tet0_;
  s.field = identity_field(s.mesh);
  s.observed.assign(s.mesh.vertex_count(), 0);
  return s;
}

FrameState Pipeline::run_frame(const FrameState& prev, const PointCloudFrame& frame) const {
  frame.validate();
  FrameState s;
  s.frame = frame.index;
  // Transforms are relative to the previous frame's mesh.
  const TriMesh& base = prev.mesh;

  TrackResult tr = tracker_->track(base, frame);
  DeformField field = std::move(tr.field);
  s.observed = std::move(tr.observed);
  s.stages = std::move(tr.stages);
  if (cfg_.track.post_process) field = post_process(base, field, cfg_.track.post_ratio, &s.post_changed);
  s.material = prev.material;

  if (use_fem_) {
    const std::vector<Vec3> pos = deform_positions(base, field);
    const std::size_t m = prev.tet.node_count();
    std::vector<Vec3> tracked(m);
    std::vector<char> obs(m, 0);
    int n_obs = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const int t = node_to_template_[i];
      tracked[i] = t >= 0 ? pos[t] : prev.tet.nodes[i];
      obs[i] = t >= 0 && s.observed[t];
      n_obs += obs[i];
    }
    if (n_obs < 3) {
      log_warn("frame " + std::to_string(frame.index) + ": fewer than 3 observed tet nodes, FEM step skipped");
      const VecX u = initial_displacement(prev.tet, tracked);
      std::vector<Vec3> moved(m);
      for (std::size_t i = 0; i < m; ++i) moved[i] = prev.tet.nodes[i] + u.segment<3>(3 * static_cast<Eigen::Index>(i));
      s.tet = prev.tet.with_nodes(std::move(moved));
    } else {
      DisplaceInput in;
      in.prev = &prev.tet;
      in.tracked = tracked;
      in.observed = obs;
      in.contacts = contact_nodes_;
      in.ell = cfg_.ell;
      const DisplaceResult dr = displace_unobserved(in, prev.material.value_or(cfg_.initial_material));
      s.material = dr.material;
      s.material_fallback = dr.material_fallback;
      s.forces = dr.forces;
      std::vector<Vec3> moved(m);
      for (std::size_t i = 0; i < m; ++i) {
        moved[i] = prev.tet.nodes[i] + dr.u.segment<3>(3 * static_cast<Eigen::Index>(i));
      }
      s.tet = prev.tet.with_nodes(std::move(moved));
      const std::vector<Vec3> targets = evaluate_embedding(embedding_, s.tet);
      field = refit_unobserved(base, tracker_->finest_graph(), field, targets, s.observed, cfg_.track);
      s.fem_applied = true;
    }
  }

  s.field = std::move(field);
  s.mesh = deform_mesh(base, s.field);
  return s;
}

std::vector<FrameState> run_sequence(const TriMesh& tmpl, const TetMesh* tet, std::span<const PointCloudFrame> frames,
                                     const ContactSpec& contacts, const PipelineConfig& cfg,
                                     const FrameCallback& on_frame) {
  std::vector<FrameState> out;
  if (frames.empty()) return out;
  std::unique_ptr<Pipeline> pipe;
  try {
    pipe = std::make_unique<Pipeline>(tmpl, tet, contacts, cfg, frames[0]);
  } catch (const std::exception& e) {
    throw FrameError(frames[0].index, e.what());
  }
  FrameState state = pipe->initial_state();
  for (const PointCloudFrame& f : frames) {
    try {
      state = pipe->run_frame(state, f);
    } catch (const std::exception& e) {
      throw FrameError(f.index, e.what());
    }
    if (on_frame) on_frame(state);
    out.push_back(state);
  }
  return out;
}

}  // namespace fetrack
