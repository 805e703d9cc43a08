#include "cg3d/io/scene_file.hpp"

#include <set>

#include "cg3d/errors.hpp"
#include "cg3d/io/files.hpp"
#include "cg3d/io/ply.hpp"

namespace cg3d::io {

using nlohmann::json;

namespace {

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

const json& need(const json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.contains(key)) throw SchemaError(ptr + "/" + escape_pointer(key), "required member is missing");
  return obj.at(key);
}

template <class T>
T as(const json& j, const std::string& ptr) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw SchemaError(ptr, "expected " + std::string(j.is_null() ? "a value" : "a different type") + ", found " +
                               j.type_name());
  }
}

std::string need_string(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = need(obj, key, ptr);
  if (!v.is_string()) throw SchemaError(ptr + "/" + key, std::string("expected a string, found ") + v.type_name());
  return v.get<std::string>();
}

template <int N>
Eigen::Matrix<double, N, 1> need_vector(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = need(obj, key, ptr);
  const std::string p = ptr + "/" + key;
  if (!v.is_array() || v.size() != N) throw SchemaError(p, "expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) throw SchemaError(p + "/" + std::to_string(i), "expected a number");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

// Visits every overridable field as (name, member reference).
template <class F>
void fields(InitConfig& c, F&& f) {
  f("camera_radius_primary", c.camera_radius_primary);
  f("camera_radius_reduced", c.camera_radius_reduced);
  f("scale_range_primary", c.scale_range_primary);
  f("scale_range_reduced", c.scale_range_reduced);
  f("scale_switch_threshold", c.scale_switch_threshold);
  f("scale_samples", c.scale_samples);
  f("scale_top_k", c.scale_top_k);
  f("translation_samples", c.translation_samples);
  f("joint_samples", c.joint_samples);
  f("alternating_rounds", c.alternating_rounds);
  f("visibility_exponent", c.visibility_exponent);
  f("camera_elevations", c.camera_elevations);
  f("camera_azimuths", c.camera_azimuths);
  f("sphere_radius_factor", c.sphere_radius_factor);
  f("max_attempts", c.max_attempts);
  f("draw_factor", c.draw_factor);
  f("render_size", c.render_size);
  f("camera_fov", c.camera_fov);
  f("threads", c.threads);
}

template <class F>
void fields(PhysicsConfig& c, F&& f) {
  f("lambda_g", c.lambda_g);
  f("lambda_c_factor", c.lambda_c_factor);
  f("k_comb", c.k_comb);
  f("steps", c.steps);
  f("learning_rate", c.learning_rate);
  f("impulse_distance", c.impulse_distance);
  f("impulse_angle_deg", c.impulse_angle_deg);
  f("impulse_overlap_range", c.impulse_overlap_range);
  f("impulse_budget", c.impulse_budget);
  f("freeze_scale", c.freeze_scale);
  f("contact_mode", c.contact_mode);
  f("floor_tolerance", c.floor_tolerance);
  f("render_size", c.render_size);
  f("camera_fov", c.camera_fov);
  f("prompt", c.prompt);
}

template <class F>
void fields(ForgeConfig& c, F&& f) {
  f("iterations", c.iterations);
  f("batch_size", c.batch_size);
  f("cfg_scale", c.cfg_scale);
  f("loss_scale", c.loss_scale);
  f("rescale_factor", c.rescale_factor);
  f("timestep_range_start", c.timestep_range_start);
  f("timestep_range_end", c.timestep_range_end);
  f("timestep_anneal_steps", c.timestep_anneal_steps);
  f("lr_mean_start", c.lr_mean_start);
  f("lr_mean_end", c.lr_mean_end);
  f("lr_color", c.lr_color);
  f("lr_opacity", c.lr_opacity);
  f("lr_scale", c.lr_scale);
  f("lr_rotation", c.lr_rotation);
  f("densify_window", c.densify_window);
  f("densify_interval", c.densify_interval);
  f("densify_grad_threshold", c.densify_grad_threshold);
  f("densify_clone_scale", c.densify_clone_scale);
  f("max_gaussians", c.max_gaussians);
  f("beta_hull", c.beta_hull);
  f("knn_k_hull", c.knn_k_hull);
  f("pointe_knn_weight", c.pointe_knn_weight);
  f("knn_k_pointe", c.knn_k_pointe);
  f("hull_refresh_interval", c.hull_refresh_interval);
  f("hull_fps_count", c.hull_fps_count);
  f("hull_radius_factor", c.hull_radius_factor);
  f("init_count", c.init_count);
  f("init_scale", c.init_scale);
  f("init_opacity", c.init_opacity);
  f("azimuth_range", c.azimuth_range);
  f("elevation_range", c.elevation_range);
  f("fov_range", c.fov_range);
  f("framing", c.framing);
  f("render_size", c.render_size);
  f("seed", c.seed);
}

template <class T>
void assign(T& dst, const json& v, const std::string& ptr) {
  if constexpr (std::is_same_v<T, ContactLossMode>) {
    const std::string s = as<std::string>(v, ptr);
    if (s == "negative_cosine") dst = ContactLossMode::NegativeCosine;
    else if (s == "penetration_depth") dst = ContactLossMode::PenetrationDepth;
    else throw SchemaError(ptr, "expected \"negative_cosine\" or \"penetration_depth\"");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw SchemaError(ptr, "expected a boolean");
    dst = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw SchemaError(ptr, "expected an integer");
    if (std::is_unsigned_v<T> && !v.is_number_unsigned()) throw SchemaError(ptr, "expected a non-negative integer");
    dst = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw SchemaError(ptr, "expected a number");
    dst = v.get<T>();
  } else {
    dst = as<T>(v, ptr);
  }
}

template <class Config>
void apply(Config& c, const json& j, const std::string& ptr) {
  if (!j.is_object()) throw SchemaError(ptr, "expected an object of overrides");
  std::set<std::string> known;
  fields(c, [&](const char* name, auto& member) {
    known.insert(name);
    if (j.contains(name)) assign(member, j.at(name), ptr + "/" + name);
  });
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw SchemaError(ptr + "/" + escape_pointer(key), "unknown setting");
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw SchemaError(ptr, e.what());
  }
}

}  // namespace

void apply_overrides(InitConfig& c, const json& j, const std::string& pointer) { apply(c, j, pointer); }
void apply_overrides(PhysicsConfig& c, const json& j, const std::string& pointer) { apply(c, j, pointer); }
void apply_overrides(ForgeConfig& c, const json& j, const std::string& pointer) { apply(c, j, pointer); }

const ObjectEntry& SceneDocument::entry(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw SceneGraphError("unknown object '" + id + "'");
}

ObjectEntry& SceneDocument::entry(const std::string& id) {
  return const_cast<ObjectEntry&>(std::as_const(*this).entry(id));
}

SceneDocument parse_scene(const json& doc, const std::filesystem::path& base_dir, MissingFiles missing) {
  SceneDocument out;
  out.base_dir = base_dir;
  if (!doc.is_object()) throw SchemaError("", "scene document must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "objects" && key != "interactions" && key != "config" && key != "anchor_scale")
      throw SchemaError("/" + escape_pointer(key), "unknown member");

  const json& objects = need(doc, "objects", "");
  if (!objects.is_array()) throw SchemaError("/objects", "expected an array");
  if (objects.empty()) throw SchemaError("/objects", "a scene needs at least one object");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string ptr = "/objects/" + std::to_string(i);
    const json& o = objects[i];
    if (!o.is_object()) throw SchemaError(ptr, "expected an object");
    for (const auto& [key, _] : o.items())
      if (key != "id" && key != "prompt" && key != "gaussians_path" && key != "init_points_path" &&
          key != "use_pointe_knn")
        throw SchemaError(ptr + "/" + escape_pointer(key), "unknown member");
    ObjectEntry e;
    e.id = need_string(o, "id", ptr);
    if (e.id.empty()) throw SchemaError(ptr + "/id", "object ids must be non-empty");
    e.prompt = need_string(o, "prompt", ptr);
    e.gaussians_path = need_string(o, "gaussians_path", ptr);
    if (o.contains("init_points_path")) e.init_points_path = need_string(o, "init_points_path", ptr);
    if (o.contains("use_pointe_knn")) assign(e.use_pointe_knn, o["use_pointe_knn"], ptr + "/use_pointe_knn");
    if (out.scene.objects.count(e.id)) throw SchemaError(ptr + "/id", "duplicate object id '" + e.id + "'");

    const auto ply = out.resolve(e.gaussians_path);
    ObjectField field;
    if (std::filesystem::exists(ply)) {
      try {
        field = ObjectField(e.id, read_gaussian_ply(ply), e.prompt);
      } catch (const Error& err) {
        throw SchemaError(ptr + "/gaussians_path", err.what());
      }
    } else if (missing == MissingFiles::Error) {
      throw SchemaError(ptr + "/gaussians_path", "file not found: " + ply.string());
    } else {
      field.set_id(e.id);
      field.set_prompt(e.prompt);
    }
    if (e.init_points_path) {
      const auto pts = out.resolve(*e.init_points_path);
      if (!std::filesystem::exists(pts))
        throw SchemaError(ptr + "/init_points_path", "file not found: " + pts.string());
    }
    out.scene.objects.emplace(e.id, std::move(field));
    out.entries.push_back(std::move(e));
  }

  if (doc.contains("interactions")) {
    const json& inter = doc["interactions"];
    if (!inter.is_array()) throw SchemaError("/interactions", "expected an array");
    for (std::size_t i = 0; i < inter.size(); ++i) {
      const std::string ptr = "/interactions/" + std::to_string(i);
      const json& o = inter[i];
      if (!o.is_object()) throw SchemaError(ptr, "expected an object");
      for (const auto& [key, _] : o.items())
        if (key != "anchor" && key != "child" && key != "prompt" && key != "params" && key != "status")
          throw SchemaError(ptr + "/" + escape_pointer(key), "unknown member");
      InteractionParams p;
      p.anchor_id = need_string(o, "anchor", ptr);
      p.child_id = need_string(o, "child", ptr);
      if (!out.scene.objects.count(p.anchor_id)) throw SchemaError(ptr + "/anchor", "unknown object '" + p.anchor_id + "'");
      if (!out.scene.objects.count(p.child_id)) throw SchemaError(ptr + "/child", "unknown object '" + p.child_id + "'");
      p.prompt = need_string(o, "prompt", ptr);
      if (o.contains("params")) {
        const json& par = o["params"];
        const std::string pp = ptr + "/params";
        if (!par.is_object()) throw SchemaError(pp, "expected an object");
        p.rotation = need_vector<4>(par, "rotation", pp);
        p.translation = need_vector<3>(par, "translation", pp);
        const json& s = need(par, "scale", pp);
        if (!s.is_number()) throw SchemaError(pp + "/scale", "expected a number");
        p.scale = s.get<double>();
      }
      if (o.contains("status")) {
        try {
          p.status = interaction_status_from_string(need_string(o, "status", ptr));
        } catch (const ValidationError& err) {
          throw SchemaError(ptr + "/status", err.what());
        }
      } else {
        p.status = o.contains("params") ? InteractionStatus::Initialized : InteractionStatus::Unset;
      }
      if (p.status != InteractionStatus::Unset && !o.contains("params"))
        throw SchemaError(ptr + "/params", "an initialized interaction needs params");
      try {
        p.validate();
      } catch (const ValidationError& err) {
        throw SchemaError(ptr, err.what());
      }
      out.scene.interactions.push_back(std::move(p));
    }
  }
  try {
    out.scene.validate();
  } catch (const SceneGraphError& err) {
    throw SchemaError("/interactions", err.what());
  }

  if (doc.contains("anchor_scale")) {
    assign(out.scene.anchor_scale, doc["anchor_scale"], "/anchor_scale");
    if (!(out.scene.anchor_scale > 0.0)) throw SchemaError("/anchor_scale", "must be positive");
  }
  if (doc.contains("config")) {
    const json& c = doc["config"];
    if (!c.is_object()) throw SchemaError("/config", "expected an object");
    for (const auto& [key, value] : c.items()) {
      if (key == "init") apply_overrides(out.init, value, "/config/init");
      else if (key == "physics") apply_overrides(out.physics, value, "/config/physics");
      else if (key == "forge") apply_overrides(out.forge, value, "/config/forge");
      else throw SchemaError("/config/" + escape_pointer(key), "expected one of init, physics, forge");
    }
    out.config = c;
  }
  return out;
}

SceneDocument load_scene(const std::filesystem::path& path, MissingFiles missing) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("not valid JSON: ") + e.what());
  }
  return parse_scene(doc, path.parent_path(), missing);
}

json scene_to_json(const SceneDocument& doc) {
  json out;
  json objects = json::array();
  for (const auto& e : doc.entries) {
    json o{{"id", e.id}, {"prompt", e.prompt}, {"gaussians_path", e.gaussians_path}};
    if (e.init_points_path) o["init_points_path"] = *e.init_points_path;
    o["use_pointe_knn"] = e.use_pointe_knn;
    objects.push_back(std::move(o));
  }
  out["objects"] = std::move(objects);
  json inter = json::array();
  for (const auto& p : doc.scene.interactions) {
    json o{{"anchor", p.anchor_id}, {"child", p.child_id}, {"prompt", p.prompt}, {"status", to_string(p.status)}};
    o["params"] = {{"rotation", {p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3]}},
                     {"translation", {p.translation[0], p.translation[1], p.translation[2]}},
                     {"scale", p.scale}};
    inter.push_back(std::move(o));
  }
  out["interactions"] = std::move(inter);
  out["anchor_scale"] = doc.scene.anchor_scale;
  if (!doc.config.empty()) out["config"] = doc.config;
  return out;
}

void store_scene(const SceneDocument& doc, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  for (const auto& e : doc.entries) {
    const auto it = doc.scene.objects.find(e.id);
    if (it == doc.scene.objects.end()) throw SceneGraphError("scene lacks an object for entry '" + e.id + "'");
    if (!it->second.empty()) write_gaussian_ply(base / e.gaussians_path, it->second.gaussians());
  }
  write_file_atomic(path, scene_to_json(doc).dump(2) + "\n");
}

}  // namespace cg3d::io
