#include <iostream>

#include <CLI11.hpp>

#include "fetrack/commands.hpp"
#include "fetrack/log.hpp"
#include "fetrack/parallel.hpp"

using namespace fetrack;

namespace {

template <class T>
void opt_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Template tracking with FEM completion of unobserved regions"};
  app.require_subcommand(1);

  int threads = 0;
  bool verbose = false, quiet = false;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset from a scenario file");
  std::string scenario_path, gen_out = "dataset";
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("scenario", scenario_path, "Scenario JSON (omit for the default bar)");
  gen->add_option("--out", gen_out, "Output directory");
  opt_flag(gen, "--seed", gen_seed, "Override the scenario seed");

  // track
  auto* trk = app.add_subcommand("track", "Run the tracking pipeline from a manifest");
  std::string manifest_path;
  TrackOverrides ov;
  trk->add_option("manifest", manifest_path, "Run manifest (JSON)")->required();
  trk->add_flag_callback("--no-fem", [&ov] { ov.fem = false; }, "Disable the FEM completion step");
  trk->add_flag_callback("--no-postprocess", [&ov] { ov.post_process = false; }, "Disable post-processing");
  opt_flag(trk, "--s-sm", ov.s_sm, "Smoothness radius factor");
  opt_flag(trk, "--w-sm-init", ov.w_sm_init, "Initial smoothness weight");
  opt_flag(trk, "--w-sm-floor", ov.w_sm_floor, "Smallest smoothness weight");
  opt_flag(trk, "--d", ov.d, "Correspondence distance factor");
  opt_flag(trk, "--alpha-deg", ov.alpha_deg, "Normal angle threshold in degrees");
  opt_flag(trk, "--ell", ov.ell, "Material/force iterations");
  opt_flag(trk, "--seed", ov.seed, "Seed");
  std::optional<std::string> out_dir;
  opt_flag(trk, "--out", out_dir, "Output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare tracked meshes with ground truth");
  std::string results_dir, truth_dir, eval_out;
  ev->add_option("results", results_dir, "Directory with frame_NNNN.ply")->required();
  ev->add_option("truth", truth_dir, "Directory with truth_NNNN.ply")->required();
  ev->add_option("--out", eval_out, "Metrics CSV (default: <results>/eval.csv)");

  // simplify
  auto* simp = app.add_subcommand("simplify", "Quadric edge-collapse simplification");
  std::string simp_in, simp_out;
  int simp_target = 1000;
  simp->add_option("input", simp_in)->required();
  simp->add_option("--out", simp_out, "Output mesh")->required();
  simp->add_option("--target", simp_target, "Target vertex count");

  // hierarchy
  auto* hier = app.add_subcommand("hierarchy", "Write the multi-resolution levels of a mesh");
  std::string hier_in, hier_out = "levels";
  int hier_base = 1000;
  hier->add_option("input", hier_in)->required();
  hier->add_option("--out", hier_out, "Output directory");
  hier->add_option("--base", hier_base, "Coarsest level size");

  // fem-check
  auto* fc = app.add_subcommand("fem-check", "Check a .node/.ele tet mesh");
  std::string fc_stem;
  fc->add_option("stem", fc_stem, "Path without the .node/.ele extension")->required();

  CLI11_PARSE(app, argc, argv);
  set_thread_count(threads);
  set_log_level(quiet ? LogLevel::Error : verbose ? LogLevel::Info : LogLevel::Warn);

  try {
    if (*gen) {
      SynthScenario scn = scenario_path.empty() ? SynthScenario{} : load_scenario(scenario_path);
      if (gen_seed) scn.seed = *gen_seed;
      cmd_generate(scn, gen_out);
      std::cout << "wrote " << gen_out << '\n';
    } else if (*trk) {
      RunManifest m = load_manifest(manifest_path);
      if (out_dir) ov.out = *out_dir;
      ov.apply(m);
      cmd_track(m, quiet ? nullptr : &std::cout);
    } else if (*ev) {
      const std::string out = eval_out.empty() ? (std::filesystem::path(results_dir) / "eval.csv").string() : eval_out;
      const auto rows = cmd_eval(results_dir, truth_dir, out);
      if (!rows.empty()) {
        std::cout << "final frame " << rows.back().frame << ": mean " << rows.back().mean << " max "
                  << rows.back().max << " unseen max " << rows.back().unseen_max << '\n';
      }
    } else if (*simp) {
      cmd_simplify(simp_in, simp_out, simp_target, std::cout);
    } else if (*hier) {
      cmd_hierarchy(hier_in, hier_out, hier_base, std::cout);
    } else if (*fc) {
      return cmd_fem_check(fc_stem, std::cout) ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
