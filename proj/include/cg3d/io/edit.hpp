#pragma once

#include <optional>
#include <string>

#include "cg3d/field.hpp"

namespace cg3d {

/// Removes the object and every interaction touching it. Former children become roots.
void edit_delete(Scene& scene, const std::string& id);

/// Swaps in a new field under the same id. Interactions touching the object become Unset.
void edit_replace(Scene& scene, const std::string& id, ObjectField field);

/// Rewires `child` to sit on `new_anchor`: its inbound interaction (created if it had none) gets
/// the new anchor, status Unset and optionally a new prompt. Throws SceneGraphError on unknown
/// ids or when the move would create a cycle; the scene is unchanged on error.
void edit_move(Scene& scene, const std::string& child, const std::string& new_anchor,
               const std::optional<std::string>& prompt = std::nullopt);

}  // namespace cg3d
