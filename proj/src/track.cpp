#include "fetrack/track.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fetrack/geodesic.hpp"
#include "fetrack/log.hpp"
#include "fetrack/parallel.hpp"

namespace fetrack {

void TrackConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(w_data, "w_data");
  positive(w_sm_init, "w_sm_init");
  positive(w_sm_floor, "w_sm_floor");
  positive(rel_stop, "rel_stop");
  positive(halve_below, "halve_below");
  positive(d, "d");
  positive(s_sm, "s_sm");
  positive(post_ratio, "post_ratio");
  positive(refit_w_data, "refit_w_data");
  positive(refit_w_sm, "refit_w_sm");
  if (!(alpha_deg > 0.0 && alpha_deg <= 90.0)) throw std::invalid_argument("alpha_deg must be in (0, 90]");
  if (max_iters < 1 || rigid_max_rounds < 1 || max_resolves < 0) {
    throw std::invalid_argument("iteration caps must be positive");
  }
}

SmoothnessGraph make_smoothness_graph(const TriMesh& rest, double radius) {
  SmoothnessGraph g;
  g.nbrs = geodesic_neighborhoods(rest, radius);
  g.rev.assign(g.nbrs.size(), {});
  g.inv_size.assign(g.nbrs.size(), 0.0);
  for (std::size_t i = 0; i < g.nbrs.size(); ++i) {
    if (!g.nbrs[i].empty()) g.inv_size[i] = 1.0 / static_cast<double>(g.nbrs[i].size());
    for (int j : g.nbrs[i]) g.rev[j].push_back(static_cast<int>(i));
  }
  return g;
}

double smoothness_energy(const SmoothnessGraph& g, const DeformField& field) {
  double e = 0.0;
  for (std::size_t i = 0; i < g.nbrs.size(); ++i) {
    double s = 0.0;
    for (int j : g.nbrs[i]) {
      s += (field[i].t - field[j].t).squaredNorm() + angle_difference(field[i].angle, field[j].angle);
    }
    e += g.inv_size[i] * s;
  }
  return e;
}

double data_energy(std::span<const Vec3> anchors, const DeformField& field, const Correspondence& corr) {
  double e = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!corr.weight[i]) continue;
    const auto& xf = field[i];
    const Vec3 p = anchors[i] + rotate(xf.axis(), xf.angle, xf.t);
    const double r = corr.normal[i].dot(p - corr.point[i]);
    e += r * r;
  }
  return e;
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 rodrigues(const Vec3& a, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  return c * Mat3::Identity() + s * skew(a) + (1.0 - c) * a * a.transpose();
}

Vec3 perpendicular_to(const Vec3& a, const Vec3& hint) {
  Vec3 b = hint - hint.dot(a) * a;
  if (b.norm() > 1e-12 * std::max(1.0, hint.norm())) return b.normalized();
  const Vec3 c = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(c).normalized();
}

// Energy over a deform field where only `free` vertices carry parameters.
// Axes are expressed in a per-vertex chart a = Q s(az, incl) whose origin
// (0, pi/2) is the current axis, so the poles of the global spherical
// parameterization are never approached during a solve.
class FieldProblem {
 public:
  FieldProblem(std::span<const Vec3> anchors, const std::vector<std::vector<int>>& one_ring,
               const SmoothnessGraph& graph, const DeformField& base, std::vector<int> free)
      : anchors_(anchors), graph_(graph), base_(base), free_(std::move(free)), slot_(base.size(), -1) {
    const std::size_t n = base.size();
    t0_.resize(n);
    a0_.resize(n);
    phi0_.resize(n);
    std::vector<Vec3> deformed(n);
    for (std::size_t i = 0; i < n; ++i) {
      t0_[i] = base[i].t;
      a0_[i] = base[i].axis();
      phi0_[i] = base[i].angle;
      deformed[i] = anchors[i] + rotate(a0_[i], phi0_[i], t0_[i]);
    }
    chart_.resize(free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const int i = free_[k];
      slot_[i] = static_cast<int>(k);
      const Vec3& a = a0_[i];
      const Vec3 hint = one_ring[i].empty() ? Vec3::Zero() : Vec3(deformed[one_ring[i][0]] - deformed[i]);
      const Vec3 b = perpendicular_to(a, hint);
      chart_[k].col(0) = a;
      chart_[k].col(1) = b;
      chart_[k].col(2) = a.cross(b);
    }
  }

  void set_plane(const Correspondence* corr, double w) {
    corr_ = corr;
    targets_ = {};
    w_data_ = w;
  }
  void set_targets(std::span<const Vec3> targets, double w) {
    targets_ = targets;
    corr_ = nullptr;
    w_data_ = w;
  }
  void set_smooth(double w) { w_sm_ = w; }
  void set_axes_free(bool f) { axes_free_ = f; }
  void set_angle_free(bool f) { angle_free_ = f; }

  VecX x0() const {
    VecX x(6 * free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const int i = free_[k];
      x.segment<3>(6 * k) = t0_[i];
      x[6 * k + 3] = 0.0;
      x[6 * k + 4] = 0.5 * std::numbers::pi;
      x[6 * k + 5] = phi0_[i];
    }
    return x;
  }

  DeformField decode(const VecX& x) const {
    DeformField out = base_;
    for (std::size_t k = 0; k < free_.size(); ++k) {
      auto& xf = out[free_[k]];
      xf.t = x.segment<3>(6 * k);
      xf.set_axis(chart_[k] * spherical_axis(x[6 * k + 3], x[6 * k + 4]));
      xf.angle = x[6 * k + 5];
    }
    return out;
  }

  double operator()(const VecX& x, VecX& grad) const {
    const std::size_t n = base_.size();
    std::vector<Vec3> t = t0_, a = a0_;
    std::vector<double> phi = phi0_;
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const int i = free_[k];
      t[i] = x.segment<3>(6 * k);
      a[i] = chart_[k] * spherical_axis(x[6 * k + 3], x[6 * k + 4]);
      phi[i] = x[6 * k + 5];
    }

    // Smoothness value over all vertices, summed per chunk in order.
    std::vector<double> partial(chunk_count(n) + chunk_count(free_.size()) + 2, 0.0);
    const std::size_t cn = chunk_count(n);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      double s = 0.0;
      for (std::size_t i = b; i < e; ++i) {
        double si = 0.0;
        for (int j : graph_.nbrs[i]) {
          const double w = wrapped_angle(phi[i], phi[j]);
          si += (t[i] - t[j]).squaredNorm() + w * w;
        }
        s += graph_.inv_size[i] * si;
      }
      partial[chunk_of(n, b)] = s;
    });

    grad.setZero(x.size());
    parallel_for(free_.size(), [&](std::size_t b, std::size_t e) {
      double s = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        const int i = free_[k];
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();

        // Smoothness: terms where i is the center, and where i is a neighbor.
        for (int j : graph_.nbrs[i]) {
          const double c = 2.0 * w_sm_ * graph_.inv_size[i];
          g.head<3>() += c * (t[i] - t[j]);
          g[5] += c * wrapped_angle(phi[i], phi[j]);
        }
        for (int j : graph_.rev[i]) {
          const double c = 2.0 * w_sm_ * graph_.inv_size[j];
          g.head<3>() += c * (t[i] - t[j]);
          g[5] += c * wrapped_angle(phi[i], phi[j]);
        }

        Vec3 dp = Vec3::Zero();  // dE/dp' for the data term
        if (corr_ && corr_->weight[i]) {
          const Vec3 p = anchors_[i] + rotate(a[i], phi[i], t[i]);
          const Vec3& nn = corr_->normal[i];
          const double r = nn.dot(p - corr_->point[i]);
          s += w_data_ * r * r;
          dp = 2.0 * w_data_ * r * nn;
        } else if (!targets_.empty()) {
          const Vec3 p = anchors_[i] + rotate(a[i], phi[i], t[i]);
          const Vec3 r = p - targets_[i];
          s += w_data_ * r.squaredNorm();
          dp = 2.0 * w_data_ * r;
        }
        if (!dp.isZero(0.0)) {
          g.head<3>() += rodrigues(a[i], phi[i]).transpose() * dp;
          const Eigen::Matrix<double, 3, 2> da =
              chart_[k] * spherical_axis_jacobian(x[6 * k + 3], x[6 * k + 4]);
          if (axes_free_) g.segment<2>(3) += (rotation_axis_jacobian(a[i], phi[i], t[i]) * da).transpose() * dp;
          g[5] += dp.dot(rotation_angle_derivative(a[i], phi[i], t[i]));
        }
        if (!angle_free_) g[5] = 0.0;  // frozen parameters keep a zero gradient
        grad.segment<6>(6 * k) = g;
      }
      partial[cn + chunk_of(free_.size(), b)] = s;
    });

    double smooth = 0.0;
    for (std::size_t c = 0; c < cn; ++c) smooth += partial[c];
    double data = 0.0;
    for (std::size_t c = cn; c < partial.size(); ++c) data += partial[c];
    return w_sm_ * smooth + data;
  }

  std::size_t free_count() const { return free_.size(); }

 private:
  static std::size_t chunk_of(std::size_t n, std::size_t begin) {
    const std::size_t c = chunk_count(n);
    for (std::size_t k = 0; k < c; ++k) {
      if (chunk_range(n, k).first == begin) return k;
    }
    return 0;
  }

  std::span<const Vec3> anchors_;
  const SmoothnessGraph& graph_;
  DeformField base_;
  std::vector<int> free_;
  std::vector<int> slot_;
  std::vector<Mat3> chart_;
  std::vector<Vec3> t0_, a0_;
  std::vector<double> phi0_;
  const Correspondence* corr_ = nullptr;
  std::span<const Vec3> targets_;
  double w_data_ = 0.0;
  double w_sm_ = 0.0;
  bool axes_free_ = true;
  bool angle_free_ = true;
};

Objective as_objective(const FieldProblem& p) {
  return [&p](const VecX& x, VecX& g) { return p(x, g); };
}

WeightRules rules_for(const TrackConfig& cfg, double r) {
  WeightRules w;
  w.max_distance = cfg.d * r;
  w.max_angle = cfg.alpha_deg * std::numbers::pi / 180.0;
  return w;
}

// d (R(omega) v) / d omega = -R [v]x J_r(omega)
Mat3 rotation_vector_jacobian(const Vec3& omega, const Vec3& v) {
  const double th = omega.norm();
  double c1, c2;
  if (th < 1e-4) {
    c1 = 0.5 - th * th / 24.0;
    c2 = 1.0 / 6.0 - th * th / 120.0;
  } else {
    c1 = (1.0 - std::cos(th)) / (th * th);
    c2 = (th - std::sin(th)) / (th * th * th);
  }
  const Mat3 w = skew(omega);
  const Mat3 jr = Mat3::Identity() - c1 * w + c2 * w * w;
  return -rotation_from_vector(omega) * skew(v) * jr;
}

SimilarityTransform decode_similarity(const Eigen::Matrix<double, 7, 1>& x) {
  SimilarityTransform s;
  s.scale = std::exp(x[0]);
  s.rotation = x.segment<3>(1);
  s.translation = x.segment<3>(4);
  return s;
}

}  // namespace

double rigid_energy(const TriMesh& tmpl, const Correspondence& corr, const Eigen::Matrix<double, 7, 1>& x,
                    Eigen::Matrix<double, 7, 1>* grad) {
  const double s = std::exp(x[0]);
  const Vec3 omega = x.segment<3>(1);
  const Vec3 tr = x.segment<3>(4);
  const Mat3 rot = rotation_from_vector(omega);
  double e = 0.0;
  if (grad) grad->setZero();
  for (std::size_t i = 0; i < tmpl.vertex_count(); ++i) {
    if (!corr.weight[i]) continue;
    const Vec3& p = tmpl.vertices()[i];
    const Vec3 rp = rot * p;
    const Vec3& n = corr.normal[i];
    const double r = n.dot(s * rp + tr - corr.point[i]);
    e += r * r;
    if (grad) {
      (*grad)[0] += 2.0 * r * s * n.dot(rp);
      grad->segment<3>(1) += 2.0 * r * s * (rotation_vector_jacobian(omega, p).transpose() * n);
      grad->segment<3>(4) += 2.0 * r * n;
    }
  }
  return e;
}

SimilarityTransform rigid_align(const TriMesh& tmpl, const PointCloudFrame& frame, const TrackConfig& cfg,
                                RigidReport* report) {
  if (frame.empty()) throw GeometryError("rigid_align: empty frame");
  const KdTree tree(frame.points);
  const WeightRules rules = rules_for(cfg, tmpl.average_edge_length());
  Eigen::Matrix<double, 7, 1> x = Eigen::Matrix<double, 7, 1>::Zero();
  RigidReport rep;
  for (int round = 0; round < cfg.rigid_max_rounds; ++round) {
    const TriMesh moved = apply_similarity(tmpl, decode_similarity(x));
    const Correspondence corr = correspond(moved.vertices(), moved.normals(), frame, tree, rules);
    rep.observed = corr.observed_count();
    if (rep.observed < 7) {
      throw GeometryError("rigid_align: degenerate fit, only " + std::to_string(rep.observed) +
                          " valid correspondences");
    }
    VecX xv = x;
    const Objective obj = [&](const VecX& v, VecX& g) {
      Eigen::Matrix<double, 7, 1> gg;
      const double e = rigid_energy(tmpl, corr, v, &gg);
      g = gg;
      return e;
    };
    MinimizeOptions mo;
    mo.max_iters = cfg.max_iters;
    const ObjectiveReport r = minimize(obj, xv, mo);
    x = xv;
    rep.rounds = round + 1;
    rep.energy = r.energy;
    const double e0 = r.initial_energy;
    if (e0 <= 0.0 || (e0 - r.energy) / e0 < cfg.rel_stop) break;
  }
  if (report) *report = rep;
  return decode_similarity(x);
}

Tracker::Tracker(const TriMesh& rest, const ResolutionHierarchy& hierarchy, const TrackConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (hierarchy.size() == 0) throw GeometryError("Tracker: empty hierarchy");
  if (hierarchy.finest().mesh.vertex_count() != rest.vertex_count()) {
    throw GeometryError("Tracker: hierarchy does not match template");
  }
  for (const ResolutionLevel& rl : hierarchy.levels) {
    Level lv;
    std::vector<Vec3> pos(rl.finest_index.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = rest.vertices()[rl.finest_index[i]];
    // Anchors are the rest positions of the same template vertices, so a
    // transform means the same thing on every level.
    lv.mesh = TriMesh(std::move(pos), rl.mesh.faces());
    lv.finest = rl.finest_index;
    lv.coarser = rl.coarser_index;
    lv.r = lv.mesh.average_edge_length();
    lv.graph = make_smoothness_graph(lv.mesh, cfg_.s_sm * lv.r);
    levels_.push_back(std::move(lv));
  }
}

DeformField Tracker::track_level(const Level& lv, const TriMesh& mesh, DeformField field,
                                 const PointCloudFrame& frame, const KdTree& tree, TrackResult& out,
                                 int level_index) const {
  const auto& anchors = mesh.vertices();
  const WeightRules rules = rules_for(cfg_, levels_.back().r);
  std::vector<int> all(anchors.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  auto refresh = [&](const DeformField& f) {
    const std::vector<Vec3> pos = deform_positions(mesh, f);
    const std::vector<Vec3> nrm = vertex_normals(pos, mesh.faces());
    return correspond(pos, nrm, frame, tree, rules);
  };

  Correspondence corr = refresh(field);
  double w_sm = cfg_.w_sm_init;
  int resolves = 0;
  MinimizeOptions mo;
  mo.max_iters = cfg_.max_iters;
  for (;;) {
    FieldProblem prob(anchors, mesh.one_ring(), lv.graph, field, all);
    prob.set_plane(&corr, cfg_.w_data);
    prob.set_smooth(w_sm);
    prob.set_axes_free(cfg_.optimize_axes);
    prob.set_angle_free(cfg_.optimize_angle);
    VecX x = prob.x0();
    const ObjectiveReport rep = minimize(as_objective(prob), x, mo);
    field = prob.decode(x);
    out.stages.push_back({level_index, w_sm, rep.initial_energy, rep.energy, rep.iterations, corr.observed_count(),
                          rep.reason});

    const double e0 = rep.initial_energy;
    const double rel = e0 > 0.0 ? (e0 - rep.energy) / e0 : 0.0;
    if (e0 <= 0.0 || rel < cfg_.rel_stop) break;
    if (rel < cfg_.halve_below || resolves >= cfg_.max_resolves) {
      w_sm *= 0.5;
      resolves = 0;
      if (w_sm < cfg_.w_sm_floor) break;
    } else {
      ++resolves;
    }
    corr = refresh(field);
  }
  if (level_index + 1 == static_cast<int>(levels_.size())) out.observed = corr.weight;
  return field;
}

TrackResult Tracker::track(const TriMesh& base, const PointCloudFrame& frame) const {
  if (frame.empty()) throw GeometryError("track_frame: empty frame");
  if (base.vertex_count() != rest().vertex_count()) {
    throw GeometryError("track_frame: base mesh does not match template");
  }
  const KdTree tree(frame.points);
  TrackResult out;
  DeformField level_field;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const Level& lv = levels_[l];
    std::vector<Vec3> pos(lv.finest.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = base.vertices()[lv.finest[i]];
    const TriMesh mesh = lv.mesh.with_positions(std::move(pos));
    DeformField f(lv.finest.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = VertexTransform::identity(mesh.normals()[i]);
    if (l > 0) {
      std::vector<char> unknown(f.size(), 0);
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (lv.coarser[i] >= 0) {
          f[i] = level_field[lv.coarser[i]];
        } else {
          unknown[i] = 1;
        }
      }
      f = propagate_smooth(lv.graph, mesh.vertices(), std::move(f), unknown, mesh.normals(), cfg_.max_iters);
    }
    level_field = track_level(lv, mesh, std::move(f), frame, tree, out, static_cast<int>(l));
  }
  out.field = std::move(level_field);
  return out;
}

TrackResult track_frame(const Tracker& tracker, const TriMesh& base, const PointCloudFrame& frame) {
  return tracker.track(base, frame);
}
DeformField post_process(const TriMesh& rest, const DeformField& field, double threshold, std::vector<int>* changed) {
  const std::vector<Vec3> def = deform_positions(rest, field);
  const auto& p = rest.vertices();
  DeformField out = field;
  if (changed) changed->clear();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& ring = rest.one_ring()[i];
    if (ring.empty()) continue;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int j : ring) {
      const double rest_len = (p[i] - p[j]).norm();
      if (rest_len <= 0.0) continue;
      min_ratio = std::min(min_ratio, (def[i] - def[j]).norm() / rest_len);
    }
    if (!(min_ratio > threshold) || !std::isfinite(min_ratio)) continue;
    std::vector<VertexTransform> nb;
    nb.reserve(ring.size());
    for (int j : ring) nb.push_back(field[j]);
    out[i] = average_transforms(nb);
    if (changed) changed->push_back(static_cast<int>(i));
  }
  return out;
}

DeformField refit_unobserved(const TriMesh& rest, const SmoothnessGraph& graph, const DeformField& field,
                             std::span<const Vec3> targets, std::span<const char> observed, const TrackConfig& cfg) {
  const std::size_t n = rest.vertex_count();
  if (targets.size() != n || observed.size() != n || field.size() != n) {
    throw GeometryError("refit_unobserved: size mismatch");
  }
  std::vector<int> free;
  for (std::size_t i = 0; i < n; ++i) {
    if (!observed[i]) free.push_back(static_cast<int>(i));
  }
  if (free.empty()) return field;
  FieldProblem prob(rest.vertices(), rest.one_ring(), graph, field, free);
  prob.set_targets(targets, cfg.refit_w_data);
  prob.set_smooth(cfg.refit_w_sm);
  prob.set_axes_free(cfg.optimize_axes);
  prob.set_angle_free(cfg.optimize_angle);
  VecX x = prob.x0();
  MinimizeOptions mo;
  mo.max_iters = cfg.max_iters;
  minimize(as_objective(prob), x, mo);
  return prob.decode(x);
}

DeformField propagate_smooth(const SmoothnessGraph& graph, std::span<const Vec3> anchors, DeformField field,
                             std::span<const char> unknown, std::span<const Vec3> axes, int max_iters) {
  std::vector<int> free;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!unknown[i]) continue;
    free.push_back(static_cast<int>(i));
    // Start from the mean of known neighbors; the solve does the rest.
    VertexTransform xf = VertexTransform::identity(axes[i]);
    int k = 0;
    for (int j : graph.nbrs[i]) {
      if (unknown[j]) continue;
      xf.t += field[j].t;
      xf.angle += field[j].angle;
      ++k;
    }
    if (k > 0) {
      xf.t /= k;
      xf.angle /= k;
    }
    field[i] = xf;
  }
  if (free.empty()) return field;
  std::vector<std::vector<int>> empty_ring(field.size());
  FieldProblem prob(anchors, empty_ring, graph, field, free);
  prob.set_smooth(1.0);
  VecX x = prob.x0();
  MinimizeOptions mo;
  mo.max_iters = max_iters;
  minimize(as_objective(prob), x, mo);
  return prob.decode(x);
}

}  // namespace fetrack
