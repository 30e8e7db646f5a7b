#include "fetrack/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fetrack {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ManifestError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ManifestError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ManifestError(what + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write " + path.string());
  out << text << '\n';
}

json track_json(const TrackConfig& c) {
  return {{"w_data", c.w_data},
          {"w_sm_init", c.w_sm_init},
          {"w_sm_floor", c.w_sm_floor},
          {"rel_stop", c.rel_stop},
          {"halve_below", c.halve_below},
          {"max_resolves", c.max_resolves},
          {"d", c.d},
          {"alpha_deg", c.alpha_deg},
          {"s_sm", c.s_sm},
          {"post_ratio", c.post_ratio},
          {"max_iters", c.max_iters},
          {"rigid_max_rounds", c.rigid_max_rounds},
          {"refit_w_data", c.refit_w_data},
          {"refit_w_sm", c.refit_w_sm},
          {"optimize_axes", c.optimize_axes},
          {"optimize_angle", c.optimize_angle}};
}

void read_track(const json& j, TrackConfig& c) {
  check_keys(j,
             {"w_data", "w_sm_init", "w_sm_floor", "rel_stop", "halve_below", "max_resolves", "d", "alpha_deg", "s_sm",
              "post_ratio", "max_iters", "rigid_max_rounds", "refit_w_data", "refit_w_sm", "optimize_axes", "optimize_angle"},
             "config");
  get_opt(j, "w_data", c.w_data);
  get_opt(j, "w_sm_init", c.w_sm_init);
  get_opt(j, "w_sm_floor", c.w_sm_floor);
  get_opt(j, "rel_stop", c.rel_stop);
  get_opt(j, "halve_below", c.halve_below);
  get_opt(j, "max_resolves", c.max_resolves);
  get_opt(j, "d", c.d);
  get_opt(j, "alpha_deg", c.alpha_deg);
  get_opt(j, "s_sm", c.s_sm);
  get_opt(j, "post_ratio", c.post_ratio);
  get_opt(j, "max_iters", c.max_iters);
  get_opt(j, "rigid_max_rounds", c.rigid_max_rounds);
  get_opt(j, "refit_w_data", c.refit_w_data);
  get_opt(j, "refit_w_sm", c.refit_w_sm);
  get_opt(j, "optimize_axes", c.optimize_axes);
  get_opt(j, "optimize_angle", c.optimize_angle);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

bool operator==(const TrackConfig& a, const TrackConfig& b) {
  return track_json(a) == track_json(b) && a.post_process == b.post_process;
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  return a.track == b.track && a.fem == b.fem && a.ell == b.ell && a.initial_material.E == b.initial_material.E &&
         a.initial_material.nu == b.initial_material.nu && a.coincide_tol == b.coincide_tol;
}

bool RunManifest::operator==(const RunManifest& o) const {
  return template_path == o.template_path && tet_stem == o.tet_stem && frames == o.frames && contacts == o.contacts &&
         truth == o.truth && output_dir == o.output_dir && prescale == o.prescale && pipeline == o.pipeline &&
         seed == o.seed;
}

void RunManifest::validate(bool check_files) const {
  try {
    pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(std::string("manifest: ") + e.what());
  }
  if (template_path.empty()) throw ManifestError("manifest: no template");
  if (frames.empty()) throw ManifestError("manifest: no frames");
  if (pipeline.fem && tet_stem.empty()) throw ManifestError("manifest: FEM enabled but no tet mesh");
  if (!truth.empty() && truth.size() != frames.size()) {
    throw ManifestError("manifest: " + std::to_string(truth.size()) + " truth meshes for " +
                        std::to_string(frames.size()) + " frames");
  }
  if (!check_files) return;
  auto need = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw ManifestError("missing file: " + p.string());
  };
  need(template_path);
  if (!tet_stem.empty() && pipeline.fem) {
    need(std::filesystem::path(tet_stem.string() + ".node"));
    need(std::filesystem::path(tet_stem.string() + ".ele"));
  }
  for (const auto& f : frames) need(f);
  if (!contacts.empty()) need(contacts);
  for (const auto& t : truth) need(t);
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["template"] = m.template_path.string();
  j["tet"] = m.tet_stem.string();
  j["frames"] = json::array();
  for (const auto& f : m.frames) j["frames"].push_back(f.string());
  j["contacts"] = m.contacts.string();
  j["truth"] = json::array();
  for (const auto& f : m.truth) j["truth"].push_back(f.string());
  j["output_dir"] = m.output_dir.string();
  j["prescale"] = m.prescale;
  j["fem"] = m.pipeline.fem;
  j["post_process"] = m.pipeline.track.post_process;
  j["ell"] = m.pipeline.ell;
  j["seed"] = m.seed;
  j["initial_material"] = {{"E", m.pipeline.initial_material.E}, {"nu", m.pipeline.initial_material.nu}};
  j["coincide_tol"] = m.pipeline.coincide_tol;
  j["config"] = track_json(m.pipeline.track);
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"template", "tet", "frames", "contacts", "truth", "output_dir", "prescale", "fem", "post_process", "ell",
                "seed", "initial_material", "coincide_tol", "config"},
               "manifest");
    m.template_path = resolve(base_dir, j.at("template").get<std::string>());
    if (j.contains("tet")) m.tet_stem = resolve(base_dir, j["tet"].get<std::string>());
    for (const auto& f : j.at("frames")) m.frames.push_back(resolve(base_dir, f.get<std::string>()));
    if (j.contains("contacts")) m.contacts = resolve(base_dir, j["contacts"].get<std::string>());
    if (j.contains("truth")) {
      for (const auto& f : j["truth"]) m.truth.push_back(resolve(base_dir, f.get<std::string>()));
    }
    if (j.contains("output_dir")) m.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    get_opt(j, "prescale", m.prescale);
    get_opt(j, "fem", m.pipeline.fem);
    get_opt(j, "post_process", m.pipeline.track.post_process);
    get_opt(j, "ell", m.pipeline.ell);
    get_opt(j, "seed", m.seed);
    get_opt(j, "coincide_tol", m.pipeline.coincide_tol);
    if (j.contains("initial_material")) {
      const json& mat = j["initial_material"];
      check_keys(mat, {"E", "nu"}, "initial_material");
      get_opt(mat, "E", m.pipeline.initial_material.E);
      get_opt(mat, "nu", m.pipeline.initial_material.nu);
    }
    if (j.contains("config")) read_track(j["config"], m.pipeline.track);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: ") + e.what());
  }
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_text(path), path.parent_path());
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) { write_text(manifest_to_json(m), path); }

std::string scenario_to_json(const SynthScenario& s) {
  json j;
  j["shape"] = to_string(s.shape);
  j["cells"] = s.cells;
  j["coarsen"] = s.coarsen;
  j["rounding"] = s.rounding;
  j["material"] = {{"E", s.material.E}, {"nu", s.material.nu}};
  j["frames"] = s.frames;
  j["tip_displacement"] = s.tip_displacement;
  if (s.force) j["force"] = *s.force;
  j["force_direction"] = vec_json(s.force_direction);
  j["contact_cells"] = s.contact_cells;
  j["view_direction"] = vec_json(s.view_direction);
  json n;
  n["kind"] = to_string(s.noise.kind);
  n["outlier_prob"] = s.noise.outlier_prob;
  n["sigma_frac"] = s.noise.sigma_frac;
  if (s.noise.sigma) n["sigma"] = *s.noise.sigma;
  n["subdivision_steps"] = s.noise.subdivision_steps;
  j["noise"] = n;
  j["seed"] = s.seed;
  return j.dump(2);
}

SynthScenario scenario_from_json(const std::string& text) {
  SynthScenario s;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"shape", "cells", "coarsen", "rounding", "material", "frames", "tip_displacement", "force", "force_direction",
                "contact_cells", "view_direction", "noise", "seed"},
               "scenario");
    if (j.contains("shape")) s.shape = shape_from_string(j["shape"].get<std::string>());
    get_opt(j, "cells", s.cells);
    get_opt(j, "coarsen", s.coarsen);
    get_opt(j, "rounding", s.rounding);
    if (j.contains("material")) {
      check_keys(j["material"], {"E", "nu"}, "material");
      get_opt(j["material"], "E", s.material.E);
      get_opt(j["material"], "nu", s.material.nu);
    }
    get_opt(j, "frames", s.frames);
    get_opt(j, "tip_displacement", s.tip_displacement);
    if (j.contains("force")) s.force = j["force"].get<double>();
    if (j.contains("force_direction")) s.force_direction = json_vec(j["force_direction"], "force_direction");
    get_opt(j, "contact_cells", s.contact_cells);
    if (j.contains("view_direction")) s.view_direction = json_vec(j["view_direction"], "view_direction");
    if (j.contains("noise")) {
      const json& n = j["noise"];
      check_keys(n, {"kind", "outlier_prob", "sigma_frac", "sigma", "subdivision_steps"}, "noise");
      if (n.contains("kind")) s.noise.kind = noise_from_string(n["kind"].get<std::string>());
      get_opt(n, "outlier_prob", s.noise.outlier_prob);
      get_opt(n, "sigma_frac", s.noise.sigma_frac);
      if (n.contains("sigma")) s.noise.sigma = n["sigma"].get<double>();
      get_opt(n, "subdivision_steps", s.noise.subdivision_steps);
    }
    get_opt(j, "seed", s.seed);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("scenario: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ManifestError(std::string("scenario: ") + e.what());
  }
  if (s.view_direction.norm() > 0.0) s.view_direction.normalize();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(e.what());
  }
  return s;
}

SynthScenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(read_text(path)); }

void save_scenario(const SynthScenario& s, const std::filesystem::path& path) { write_text(scenario_to_json(s), path); }

}  // namespace fetrack
