#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hivla/sim2d/types.hpp"

namespace hivla::sim2d {

/// Places the task's objects by rejection sampling (non-overlapping, away
/// from the walls) and seeds the gripper pose. Deterministic in (task, seed).
/// Spatial-variant target ids are resolved here once positions exist.
/// Throws RuntimeError when no non-overlapping placement is found within
/// cfg.max_reset_attempts draws.
SceneState reset(const TaskSpec& task, std::uint64_t seed, const SimConfig& cfg = {});

/// Advances the world by one action: clamped planar motion, absolute gripper
/// openness target, grasp on a closing threshold crossing over a movable
/// object, release on an opening crossing, click recording on the topmost
/// object under the gripper. Pure: returns the successor state.
SceneState step(const SceneState& state, const Eigen::VectorXd& action, const SimConfig& cfg = {});

/// Task-family success predicate on the current state only.
bool check_success(const SceneState& state, const SimConfig& cfg = {});

/// What a target name resolves to: a scene object, or a fixed table point.
struct ResolvedTarget {
  enum class Kind { object, point };
  Kind kind = Kind::object;
  int id = -1;
  Eigen::Vector2d point{0.5, 0.5};
};

/// Resolves names like "red block", "left bell", "green mat" or "center of
/// the table" against the scene. Spatial words rank same-class objects by x.
/// Returns nullopt for unknown or ambiguous names.
std::optional<ResolvedTarget> resolve_target(const SceneState& state, const std::string& name);

/// Display name for an object, matching the wording resolve_target accepts:
/// spatial wording for spatial-variant scenes, color wording otherwise.
std::string object_display_name(const SceneState& state, const ObjectRecord& obj);

}  // namespace hivla::sim2d
