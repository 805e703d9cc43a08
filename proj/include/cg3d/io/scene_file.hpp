#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cg3d/composer.hpp"
#include "cg3d/field.hpp"
#include "cg3d/forge.hpp"
#include "cg3d/physics.hpp"

namespace cg3d::io {

struct ObjectEntry {
  std::string id;
  std::string prompt;
  std::string gaussians_path;  // as written in the document, relative to the scene file
  std::optional<std::string> init_points_path;
  bool use_pointe_knn = false;
};

/// A scene file in memory: the scene itself plus what is needed to write it back.
struct SceneDocument {
  Scene scene;
  std::vector<ObjectEntry> entries;  // document order
  nlohmann::json config = nlohmann::json::object();  // overrides exactly as given
  InitConfig init;
  PhysicsConfig physics;
  ForgeConfig forge;
  std::filesystem::path base_dir;

  const ObjectEntry& entry(const std::string& id) const;
  ObjectEntry& entry(const std::string& id);
  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

enum class MissingFiles {
  Error,
  /// Objects whose PLY does not exist yet load with no Gaussians (used before generation).
  Allow,
};

/// Validates the document and throws SchemaError with a JSON pointer to the first problem.
SceneDocument parse_scene(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                          MissingFiles missing = MissingFiles::Error);
SceneDocument load_scene(const std::filesystem::path& path, MissingFiles missing = MissingFiles::Error);

nlohmann::json scene_to_json(const SceneDocument& doc);
/// Writes every non-empty object's PLY and then the scene JSON, each atomically.
void store_scene(const SceneDocument& doc, const std::filesystem::path& path);

/// Applies named overrides; unknown names and type mismatches raise SchemaError under `pointer`.
void apply_overrides(InitConfig& c, const nlohmann::json& j, const std::string& pointer);
void apply_overrides(PhysicsConfig& c, const nlohmann::json& j, const std::string& pointer);
void apply_overrides(ForgeConfig& c, const nlohmann::json& j, const std::string& pointer);

}  // namespace cg3d::io
