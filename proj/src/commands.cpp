#include "fetrack/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <regex>

#include "fetrack/log.hpp"
#include "fetrack/mesh_io.hpp"
#include "fetrack/metrics.hpp"
#include "fetrack/simplify.hpp"
#include "fetrack/tet_io.hpp"

namespace fetrack {

namespace fs = std::filesystem;

std::string frame_name(const std::string& prefix, int frame, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04d", frame);
  return prefix + buf + ext;
}

void TrackOverrides::apply(RunManifest& m) const {
  if (fem) m.pipeline.fem = *fem;
  if (post_process) m.pipeline.track.post_process = *post_process;
  if (s_sm) m.pipeline.track.s_sm = *s_sm;
  if (w_sm_init) m.pipeline.track.w_sm_init = *w_sm_init;
  if (w_sm_floor) m.pipeline.track.w_sm_floor = *w_sm_floor;
  if (d) m.pipeline.track.d = *d;
  if (alpha_deg) m.pipeline.track.alpha_deg = *alpha_deg;
  if (ell) m.pipeline.ell = *ell;
  if (seed) m.seed = *seed;
  if (out) m.output_dir = *out;
}

namespace {

void write_mask(const fs::path& path, const std::vector<char>& mask) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (char c : mask) out << (c ? 1 : 0) << '\n';
}

std::vector<char> read_mask(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<char> out;
  int v = 0;
  while (in >> v) out.push_back(v != 0);
  if (!in.eof()) throw ParseError(path.string() + ": expected 0/1 values");
  return out;
}

TriMesh scaled(const TriMesh& m, double s) {
  std::vector<Vec3> v = m.vertices();
  for (Vec3& p : v) p *= s;
  return m.with_positions(std::move(v));
}

// Sorted frame numbers of files named <prefix>_NNNN<ext> in dir.
std::vector<int> list_frames(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  if (!fs::is_directory(dir)) throw ParseError("not a directory: " + dir.string());
  const std::regex re(prefix + "_(\\d+)" + std::regex_replace(ext, std::regex("\\."), "\\."));
  std::vector<int> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) out.push_back(std::stoi(m[1]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void cmd_generate(const SynthScenario& scn, const fs::path& dir) {
  const SynthData data = generate_sequence(scn);
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "truth");
  save_mesh(data.template_mesh, dir / "template.ply");
  save_tet_mesh(data.tracker_tet, dir / "tet");
  save_tet_mesh(data.truth_tet, dir / "truth_tet");
  save_contacts(data.contacts, dir / "contacts.txt");
  save_scenario(scn, dir / "scenario.json");

  RunManifest m;
  m.template_path = "template.ply";
  m.tet_stem = "tet";
  m.contacts = "contacts.txt";
  m.output_dir = "results";
  m.seed = scn.seed;
  for (std::size_t k = 0; k < data.clouds.size(); ++k) {
    const int f = static_cast<int>(k) + 1;
    const fs::path cloud = fs::path("frames") / frame_name("cloud", f, ".ply");
    const fs::path truth = fs::path("truth") / frame_name("truth", f, ".ply");
    save_cloud(data.clouds[k], dir / cloud);
    save_mesh(data.truth[k], dir / truth);
    write_mask(dir / "truth" / frame_name("visible", f, ".txt"), data.visible[k]);
    m.frames.push_back(cloud);
    m.truth.push_back(truth);
  }
  save_manifest(m, dir / "manifest.json");
}

void cmd_track(const RunManifest& manifest, std::ostream* progress) {
  manifest.validate(true);
  const PipelineConfig& cfg = manifest.pipeline;

  const TriMesh tmpl_in = load_mesh(manifest.template_path);
  const double s = manifest.prescale ? 1.0 / tmpl_in.bbox_diagonal() : 1.0;
  const TriMesh tmpl = scaled(tmpl_in, s);

  std::optional<TetMesh> tet;
  if (cfg.fem) {
    TetMesh t = load_tet_mesh(manifest.tet_stem);
    std::vector<Vec3> nodes = t.nodes;
    for (Vec3& p : nodes) p *= s;
    tet = t.with_nodes(std::move(nodes));
  }
  const ContactSpec contacts = manifest.contacts.empty() ? ContactSpec{} : load_contacts(manifest.contacts);

  std::vector<PointCloudFrame> frames;
  for (std::size_t k = 0; k < manifest.frames.size(); ++k) {
    PointCloudFrame f = load_cloud(manifest.frames[k]);
    for (Vec3& p : f.points) p *= s;
    f.index = static_cast<int>(k) + 1;
    frames.push_back(std::move(f));
  }
  std::vector<TriMesh> truth;
  for (const auto& p : manifest.truth) {
    TriMesh t = scaled(load_mesh(p), s);
    if (t.vertex_count() != tmpl.vertex_count()) {
      throw ParseError(p.string() + ": vertex count differs from the template");
    }
    truth.push_back(std::move(t));
  }

  const fs::path& out = manifest.output_dir;
  fs::create_directories(out);
  std::vector<FrameMetrics> rows;
  std::ofstream material(out / "material.csv");
  std::ofstream stages(out / "stages.csv");
  if (!material || !stages) throw ParseError("cannot write into " + out.string());
  material << std::setprecision(17) << "frame,E,nu,fallback\n";
  stages << std::setprecision(10) << "frame,level,w_sm,e_start,e_end,iterations,observed,reason,post_changed\n";

  std::unique_ptr<Pipeline> pipe;
  try {
    pipe = std::make_unique<Pipeline>(tmpl, tet ? &*tet : nullptr, contacts, cfg, frames[0]);
  } catch (const std::exception& e) {
    throw FrameError(frames[0].index, e.what());
  }
  const TriMesh& rest = pipe->rest();
  auto on_frame = [&](const FrameState& st) {
    const int f = st.frame;
    save_mesh(scaled(st.mesh, 1.0 / s), out / frame_name("frame", f, ".ply"));
    write_field_csv(out / frame_name("field", f, ".csv"), st.field);
    write_mask(out / frame_name("mask", f, ".txt"), st.observed);

    FrameMetrics row;
    row.frame = f;
    const TriMesh& ref = truth.empty() ? rest : truth[static_cast<std::size_t>(f - 1)];
    const DistanceStats d = mean_max_vertex_distance(st.mesh, ref);
    row.mean_dist = d.mean;
    row.max_dist = d.max;
    row.volume = mesh_volume(st.mesh);
    row.area = mesh_area(st.mesh);
    rows.push_back(row);
    write_metrics_csv(out / "metrics.csv", rows);

    material << f << ',';
    if (st.material) {
      material << st.material->E << ',' << st.material->nu << ',' << (st.material_fallback ? 1 : 0) << '\n';
    } else {
      material << ",,\n";
    }
    material.flush();
    for (const StageLog& l : st.stages) {
      stages << f << ',' << l.level << ',' << l.w_sm << ',' << l.e_start << ',' << l.e_end << ',' << l.iterations
             << ',' << l.observed << ',' << to_string(l.reason) << ',' << st.post_changed.size() << '\n';
    }
    stages.flush();
    if (progress) {
      *progress << "frame " << f << ": mean " << row.mean_dist << " max " << row.max_dist
                << (st.fem_applied ? "" : " (no FEM)") << std::endl;
    }
  };
  FrameState state = pipe->initial_state();
  for (const PointCloudFrame& f : frames) {
    try {
      state = pipe->run_frame(state, f);
    } catch (const std::exception& e) {
      throw FrameError(f.index, e.what());
    }
    on_frame(state);
  }
}

std::vector<EvalRow> cmd_eval(const fs::path& results_dir, const fs::path& truth_dir, const fs::path& out_csv) {
  const std::vector<int> tf = list_frames(truth_dir, "truth", ".ply");
  const std::vector<int> rf = list_frames(results_dir, "frame", ".ply");
  if (tf.empty()) throw ParseError("no truth_NNNN.ply files in " + truth_dir.string());
  if (tf != rf) {
    throw ParseError("frame count mismatch: " + std::to_string(rf.size()) + " results, " + std::to_string(tf.size()) +
                     " truth meshes");
  }
  std::vector<EvalRow> rows;
  for (int f : tf) {
    const TriMesh truth = load_mesh(truth_dir / frame_name("truth", f, ".ply"));
    const TriMesh res = load_mesh(results_dir / frame_name("frame", f, ".ply"));
    if (truth.vertex_count() != res.vertex_count()) {
      throw ParseError("frame " + std::to_string(f) + ": vertex counts differ");
    }
    std::vector<char> seen;
    const fs::path vis = truth_dir / frame_name("visible", f, ".txt");
    const fs::path mask = results_dir / frame_name("mask", f, ".txt");
    if (fs::exists(vis)) {
      seen = read_mask(vis);
    } else if (fs::exists(mask)) {
      seen = read_mask(mask);
    } else {
      seen.assign(truth.vertex_count(), 0);
    }
    if (seen.size() != truth.vertex_count()) throw ParseError("frame " + std::to_string(f) + ": mask size mismatch");
    std::vector<int> unseen;
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) unseen.push_back(static_cast<int>(i));
    }
    EvalRow r;
    r.frame = f;
    const DistanceStats all = mean_max_vertex_distance(res, truth);
    r.mean = all.mean;
    r.max = all.max;
    if (!unseen.empty()) {
      const DistanceStats u = mean_max_vertex_distance(res, truth, std::span<const int>(unseen));
      r.unseen_mean = u.mean;
      r.unseen_max = u.max;
    }
    r.unseen_count = static_cast<int>(unseen.size());
    r.volume = mesh_volume(res);
    r.area = mesh_area(res);
    rows.push_back(r);
  }

  std::ofstream out(out_csv);
  if (!out) throw ParseError("cannot write " + out_csv.string());
  out << std::setprecision(10) << "frame,mean_dist,max_dist,unseen_mean,unseen_max,unseen_count,volume,area\n";
  EvalRow sum;
  for (const EvalRow& r : rows) {
    out << r.frame << ',' << r.mean << ',' << r.max << ',' << r.unseen_mean << ',' << r.unseen_max << ','
        << r.unseen_count << ',' << r.volume << ',' << r.area << '\n';
    sum.mean += r.mean / rows.size();
    sum.max = std::max(sum.max, r.max);
    sum.unseen_mean += r.unseen_mean / rows.size();
    sum.unseen_max = std::max(sum.unseen_max, r.unseen_max);
    sum.volume += r.volume / rows.size();
    sum.area += r.area / rows.size();
  }
  // Summary: averages of means/volume/area, maxima of maxima.
  out << "summary," << sum.mean << ',' << sum.max << ',' << sum.unseen_mean << ',' << sum.unseen_max << ",,"
      << sum.volume << ',' << sum.area << '\n';
  return rows;
}

void cmd_simplify(const fs::path& in, const fs::path& out, int target, std::ostream& log) {
  const TriMesh m = load_mesh(in);
  const SimplifyResult r = simplify_level(m, target);
  save_mesh(r.mesh, out);
  log << m.vertex_count() << " -> " << r.mesh.vertex_count() << " vertices, " << r.collapses << " collapses"
      << (r.reached_target ? "" : " (target not reached)") << '\n';
}

void cmd_hierarchy(const fs::path& in, const fs::path& out_dir, int base, std::ostream& log) {
  const TriMesh m = load_mesh(in);
  HierarchyOptions opts;
  opts.base_vertex_count = base;
  const ResolutionHierarchy h = build_hierarchy(m, opts);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < h.levels.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "level_%02zu.ply", k);
    save_mesh(h.levels[k].mesh, out_dir / name);
    log << name << ": " << h.levels[k].mesh.vertex_count() << " vertices\n";
  }
}

bool cmd_fem_check(const fs::path& stem, std::ostream& log) {
  const TetMesh tet = load_tet_mesh(stem);
  bool ok = true;
  double vmin = std::numeric_limits<double>::infinity(), vsum = 0.0;
  for (const Tet& t : tet.tets) {
    const double v = tet_signed_volume(tet.nodes[t[0]], tet.nodes[t[1]], tet.nodes[t[2]], tet.nodes[t[3]]);
    vmin = std::min(vmin, v);
    vsum += v;
  }
  const int bad = tet.radius_edge_violations(2.0);
  log << tet.node_count() << " nodes, " << tet.tets.size() << " tets, " << tet.surface_nodes.size()
      << " surface nodes\n";
  log << "volume " << vsum << ", smallest tet " << vmin << '\n';
  log << "radius-edge ratio > 2: " << bad << " tets\n";
  const TriMesh surf = tet.surface_mesh();
  if (!surf.watertight()) {
    log << "surface is not watertight\n";
    ok = false;
  }

  const StiffnessSystem sys = assemble_stiffness(tet, Material{1.0, 0.3, false});
  const SpMat& K = sys.K();
  double knorm = 0.0;
  {
    VecX rows = VecX::Zero(K.rows());
    for (int k = 0; k < K.outerSize(); ++k) {
      for (SpMat::InnerIterator it(K, k); it; ++it) rows[it.row()] += std::abs(it.value());
    }
    knorm = rows.maxCoeff();
  }
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : tet.nodes) c += p;
  c /= static_cast<double>(tet.node_count());
  double worst = 0.0;
  for (int mode = 0; mode < 6; ++mode) {
    VecX u(3 * static_cast<Eigen::Index>(tet.node_count()));
    for (std::size_t i = 0; i < tet.node_count(); ++i) {
      const Vec3 e = Vec3::Unit(mode % 3);
      u.segment<3>(3 * static_cast<Eigen::Index>(i)) = mode < 3 ? e : Vec3(e.cross(tet.nodes[i] - c));
    }
    worst = std::max(worst, (K * u).cwiseAbs().maxCoeff() / (knorm * u.cwiseAbs().maxCoeff()));
  }
  log << "rigid modes: max |K u| / (|K| |u|) = " << worst << '\n';
  if (worst > 1e-9) ok = false;
  return ok;
}

}  // namespace fetrack
