// Command-line front end: scene files in, updated scene files (and PNGs) out.
//
// Exit codes: 0 success, 1 bad input or unusable scene, 2 guidance service failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include "cg3d/composer.hpp"
#include "cg3d/distill.hpp"
#include "cg3d/errors.hpp"
#include "cg3d/forge.hpp"
#include "cg3d/io/edit.hpp"
#include "cg3d/io/files.hpp"
#include "cg3d/io/ply.hpp"
#include "cg3d/io/png.hpp"
#include "cg3d/io/scene_file.hpp"
#include "cg3d/io/wire.hpp"
#include "cg3d/physics.hpp"

namespace fs = std::filesystem;
using namespace cg3d;

namespace {

constexpr int kUserError = 1;
constexpr int kServiceError = 2;

std::string default_oracle() {
  const char* env = std::getenv("CG3D_GUIDANCE_URL");
  return env && *env ? env : "synthetic";
}

std::pair<std::string, std::string> split_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == s.size())
    throw ValidationError("--pair expects 'anchor,child' (got '" + s + "')");
  return {s.substr(0, comma), s.substr(comma + 1)};
}

std::size_t find_pair(const Scene& scene, const std::string& pair) {
  const auto [anchor, child] = split_pair(pair);
  return scene.interaction_index(anchor, child);
}

// Stand-in CLF for runs without a service: prefers the child centred on top of its anchor at
// half scale, which is enough to exercise the whole pipeline end to end.
std::unique_ptr<GuidanceOracle> synthetic_placement(const Scene& scene, std::size_t idx, double noise,
                                                    std::uint64_t seed) {
  const InteractionParams& p = scene.interactions[idx];
  const ObjectField& anchor = scene.object(p.anchor_id);
  const ObjectField& child = scene.object(p.child_id);
  double top = -1e300, bottom = 1e300;
  for (const auto& g : anchor.gaussians()) top = std::max(top, g.mean.y());
  for (const auto& g : child.gaussians()) bottom = std::min(bottom, g.mean.y());
  const double s = 0.5;
  const Vec3 a = anchor.geometric_center(), c = child.geometric_center();
  const Vec3 t(a.x() - s * c.x(), top - s * bottom, a.z() - s * c.z());
  return synthetic_clf(t, s, noise, seed);
}

// Stand-in residual oracle for `generate`: a photometric target built from the object's own
// point cloud, coloured by direction from its centre.
std::unique_ptr<GuidanceOracle> synthetic_generation(std::span<const Vec3> points, const ForgeConfig& cfg) {
  Vec3 center = Vec3::Zero();
  for (const auto& p : points) center += p;
  center /= static_cast<double>(points.size());
  std::vector<Gaussian> gs(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    gs[i].mean = points[i];
    gs[i].scale = Vec3::Constant(1.5 * cfg.init_scale);
    gs[i].opacity = 0.9;
    const Vec3 d = points[i] - center;
    gs[i].color = d.norm() > 0 ? (0.5 * (d.normalized() + Vec3::Ones())).eval() : Vec3(0.5, 0.5, 0.5);
  }
  return std::make_unique<PhotometricOracle>(ObjectField("target", std::move(gs)));
}

std::unique_ptr<GuidanceOracle> remote(const std::string& url) { return std::make_unique<io::HttpOracle>(url); }

void run_init(io::SceneDocument& doc, std::size_t idx, const std::string& oracle_name, std::uint64_t seed) {
  doc.scene.interactions[idx].status = InteractionStatus::Unset;
  const auto oracle = oracle_name == "synthetic" ? synthetic_placement(doc.scene, idx, 0.0, seed) : remote(oracle_name);
  InitDiagnostics diag;
  const InteractionParams p = structured_init(doc.scene, idx, *oracle, doc.init, seed, &diag);
  doc.scene.interactions[idx] = p;
  std::printf("init %s,%s: t=(%.4f, %.4f, %.4f) s=%.4f oracle_calls=%zu%s\n", p.anchor_id.c_str(), p.child_id.c_str(),
              p.translation.x(), p.translation.y(), p.translation.z(), p.scale, diag.oracle_calls,
              diag.radius_switched ? " (reduced radius)" : "");
}

void run_settle(io::SceneDocument& doc, std::size_t idx, const std::string& oracle_name) {
  std::unique_ptr<GuidanceOracle> oracle;
  if (oracle_name != "none" && oracle_name != "synthetic") oracle = remote(oracle_name);
  PhysicsConfig cfg = doc.physics;
  if (cfg.prompt.empty()) cfg.prompt = doc.scene.interactions[idx].prompt;
  const SettleReport r = settle(doc.scene, idx, oracle.get(), cfg);
  doc.scene.interactions[idx] = r.params;
  std::printf("settle %s,%s: steps=%d impulses=%zu feasible=%s%s\n", r.params.anchor_id.c_str(),
              r.params.child_id.c_str(), r.steps, r.impulses.size(), r.feasible ? "yes" : "no",
              r.oracle_failed ? " (guidance failed, physics only)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional Gaussian scene toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  std::string scene_path, object_id, oracle_name = default_oracle(), pair, out_dir;
  int iterations = -1, turntable = 8, size = 256, views = 4;
  double fraction = 0.25, elevation = 30.0;

  auto* generate = app.add_subcommand("generate", "Optimise one object's Gaussians from its point cloud");
  generate->add_option("scene", scene_path)->required();
  generate->add_option("--object", object_id)->required();
  generate->add_option("--oracle", oracle_name, "'synthetic' or a guidance service URL");
  generate->add_option("--iterations", iterations, "Override the configured iteration count");

  auto* init = app.add_subcommand("init", "Monte-Carlo initialisation of one interaction");
  init->add_option("scene", scene_path)->required();
  init->add_option("--pair", pair, "anchor,child")->required();
  init->add_option("--oracle", oracle_name, "'synthetic' or a guidance service URL");

  std::string settle_oracle = "none";
  auto* settle_cmd = app.add_subcommand("settle", "Physics-guided refinement of one interaction");
  settle_cmd->add_option("scene", scene_path)->required();
  settle_cmd->add_option("--pair", pair, "anchor,child")->required();
  settle_cmd->add_option("--oracle", settle_oracle, "'none' or a residual-capable guidance service URL");

  auto* compose = app.add_subcommand("compose", "Initialise and settle every interaction in ancestral order");
  compose->add_option("scene", scene_path)->required();
  compose->add_option("--oracle", oracle_name, "'synthetic' or a guidance service URL");

  auto* render_cmd = app.add_subcommand("render", "Render the composed scene");
  render_cmd->add_option("scene", scene_path)->required();
  render_cmd->add_option("--turntable", turntable, "Number of frames around the scene")->check(CLI::PositiveNumber);
  render_cmd->add_option("--out", out_dir)->required();
  render_cmd->add_option("--size", size, "Image side in pixels")->check(CLI::PositiveNumber);
  render_cmd->add_option("--elevation", elevation, "Camera elevation in degrees");

  auto* distill_cmd = app.add_subcommand("distill", "Compress one object by retraining a smaller field");
  distill_cmd->add_option("scene", scene_path)->required();
  distill_cmd->add_option("--object", object_id)->required();
  distill_cmd->add_option("--fraction", fraction)->required();
  distill_cmd->add_option("--iterations", iterations);
  distill_cmd->add_option("--views", views, "Training views per iteration");

  auto* edit = app.add_subcommand("edit", "Edit the scene graph");
  edit->add_option("scene", scene_path)->required();
  edit->require_subcommand(1);
  std::string edit_id, edit_ply, edit_anchor, edit_prompt;
  auto* del = edit->add_subcommand("delete", "Remove an object and its interactions");
  del->add_option("id", edit_id)->required();
  auto* replace = edit->add_subcommand("replace", "Swap an object's Gaussians for a PLY file");
  replace->add_option("id", edit_id)->required();
  replace->add_option("ply", edit_ply)->required();
  auto* move = edit->add_subcommand("move", "Put a child on a different anchor");
  move->add_option("child", edit_id)->required();
  move->add_option("anchor", edit_anchor)->required();
  move->add_option("--prompt", edit_prompt, "New interaction prompt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUserError;
  }

  try {
    const fs::path path = scene_path;
    if (generate->parsed()) {
      io::SceneDocument doc = io::load_scene(path, io::MissingFiles::Allow);
      io::ObjectEntry& e = doc.entry(object_id);
      if (!e.init_points_path) throw ValidationError("object '" + object_id + "' has no init_points_path");
      const std::vector<Vec3> points = io::read_points(doc.resolve(*e.init_points_path));
      ForgeConfig cfg = doc.forge;
      cfg.seed = seed;
      if (iterations >= 0) cfg.iterations = iterations;
      const auto oracle = oracle_name == "synthetic" ? synthetic_generation(points, cfg) : remote(oracle_name);
      ObjectField f = generate_object(e.prompt, points, *oracle, cfg, e.use_pointe_knn);
      f.set_id(e.id);
      std::printf("generate %s: %zu gaussians after %d iterations\n", e.id.c_str(), f.size(), cfg.iterations);
      edit_replace(doc.scene, e.id, std::move(f));
      io::store_scene(doc, path);
    } else if (init->parsed()) {
      io::SceneDocument doc = io::load_scene(path);
      run_init(doc, find_pair(doc.scene, pair), oracle_name, seed);
      io::store_scene(doc, path);
    } else if (settle_cmd->parsed()) {
      io::SceneDocument doc = io::load_scene(path);
      const std::size_t idx = find_pair(doc.scene, pair);
      if (doc.scene.interactions[idx].status == InteractionStatus::Unset)
        throw StatusError("interaction " + pair + " must be initialised before settling");
      run_settle(doc, idx, settle_oracle);
      io::store_scene(doc, path);
    } else if (compose->parsed()) {
      io::SceneDocument doc = io::load_scene(path);
      std::size_t passes = 0;
      for (const std::size_t idx : doc.scene.ancestral_order()) {
        run_init(doc, idx, oracle_name, combine_seed(seed, idx));
        run_settle(doc, idx, "none");
        ++passes;
      }
      std::printf("compose: %zu init+settle passes\n", passes);
      io::store_scene(doc, path);
    } else if (render_cmd->parsed()) {
      const io::SceneDocument doc = io::load_scene(path);
      const ObjectField world = flatten_scene(doc.scene);
      const Vec3 c = world.geometric_center();
      double r = 1e-6;
      for (const auto& g : world.gaussians()) r = std::max(r, (g.mean - c).norm());
      const double fov = 45.0;
      const double dist = r / (0.6 * std::tan(0.5 * deg_to_rad(fov)));
      fs::create_directories(out_dir);
      for (int k = 0; k < turntable; ++k) {
        const Camera cam = orbit_camera(c, dist, 360.0 * k / turntable, elevation, fov, size, size);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", k);
        io::write_png(fs::path(out_dir) / name, render(world, cam).color);
      }
      std::printf("render: %d frames in %s\n", turntable, out_dir.c_str());
    } else if (distill_cmd->parsed()) {
      io::SceneDocument doc = io::load_scene(path);
      const ObjectField& src = doc.scene.object(object_id);
      DistillConfig cfg;
      cfg.seed = seed;
      const DistillResult r = distill(src, fraction, views, iterations >= 0 ? iterations : 1000, cfg);
      std::printf("distill %s: %zu -> %zu gaussians, %.2f dB over %d held-out views\n", object_id.c_str(), src.size(),
                  r.field.size(), r.psnr, cfg.heldout_views);
      // Geometry is preserved closely enough that interactions keep their status.
      ObjectField next = r.field;
      doc.scene.objects.at(object_id) = std::move(next);
      io::store_scene(doc, path);
    } else if (edit->parsed()) {
      io::SceneDocument doc = io::load_scene(path);
      if (del->parsed()) {
        edit_delete(doc.scene, edit_id);
        std::erase_if(doc.entries, [&](const io::ObjectEntry& e) { return e.id == edit_id; });
      } else if (replace->parsed()) {
        const ObjectField& old = doc.scene.object(edit_id);
        edit_replace(doc.scene, edit_id, ObjectField(edit_id, io::read_gaussian_ply(edit_ply), old.prompt()));
      } else {
        edit_move(doc.scene, edit_id, edit_anchor,
                  edit_prompt.empty() ? std::nullopt : std::optional<std::string>(edit_prompt));
      }
      io::store_scene(doc, path);
      std::printf("edit: %zu objects, %zu interactions\n", doc.scene.objects.size(), doc.scene.interactions.size());
    }
  } catch (const OracleError& e) {
    std::fprintf(stderr, "cg3d: guidance service error: %s\n", e.what());
    return kServiceError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cg3d: %s\n", e.what());
    return kUserError;
  }
  return 0;
}
