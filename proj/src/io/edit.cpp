#include "cg3d/io/edit.hpp"

#include <algorithm>

#include "cg3d/errors.hpp"

namespace cg3d {

void edit_delete(Scene& scene, const std::string& id) {
  if (!scene.objects.erase(id)) throw SceneGraphError("cannot delete unknown object '" + id + "'");
  std::erase_if(scene.interactions, [&](const InteractionParams& p) { return p.anchor_id == id || p.child_id == id; });
}

void edit_replace(Scene& scene, const std::string& id, ObjectField field) {
  const auto it = scene.objects.find(id);
  if (it == scene.objects.end()) throw SceneGraphError("cannot replace unknown object '" + id + "'");
  field.set_id(id);
  it->second = std::move(field);
  for (auto& p : scene.interactions)
    if (p.anchor_id == id || p.child_id == id) p.status = InteractionStatus::Unset;
}

void edit_move(Scene& scene, const std::string& child, const std::string& new_anchor,
               const std::optional<std::string>& prompt) {
  if (!scene.objects.count(child)) throw SceneGraphError("cannot move unknown object '" + child + "'");
  if (!scene.objects.count(new_anchor)) throw SceneGraphError("unknown anchor '" + new_anchor + "'");
  std::vector<InteractionParams> next = scene.interactions;
  const auto inbound = std::find_if(next.begin(), next.end(), [&](const auto& p) { return p.child_id == child; });
  InteractionParams moved;
  if (inbound != next.end()) {
    moved = *inbound;
    next.erase(inbound);
  }
  moved.anchor_id = new_anchor;
  moved.child_id = child;
  moved.status = InteractionStatus::Unset;
  if (prompt) moved.prompt = *prompt;
  next.push_back(std::move(moved));
  Scene trial;
  trial.interactions = next;
  for (const auto& [id, _] : scene.objects) trial.objects.emplace(id, ObjectField(id, std::vector<Gaussian>(1)));
  trial.validate();
  scene.interactions = std::move(next);
}

}  // namespace cg3d
