#pragma once

#include <vector>

#include "hivla/plan/corrupt.hpp"
#include "hivla/plan/plan.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::plan {

/// Next subtask for the scene, derived from privileged simulator state: the
/// first unsatisfied stage of the task, with the target's ground-truth bbox
/// in the [0, 1000] frame (computed against the HD raster). Returns the
/// `done` sentinel once the task's success predicate holds.
StructuredPlan oracle_plan(const sim2d::SceneState& state, const sim2d::SimConfig& cfg = {});

/// Whether `plan`'s subtask is satisfied in `state`. Place plans are judged
/// on the object that was held when the plan was issued (`held_at_issue`,
/// -1 when nothing was held). Unresolvable targets are simply unsatisfied.
bool subtask_done(const sim2d::SceneState& state, const StructuredPlan& plan, int held_at_issue,
                  const sim2d::SimConfig& cfg = {});

/// All admissible subtasks for the scene, used as the replacement pool for
/// language corruption.
std::vector<SubtaskEntry> build_scene_vocabulary(const sim2d::SceneState& state);

/// Full plan for a vocabulary entry: the entry's triple plus a bbox grounded
/// on the current frame. Object targets get their rendered-footprint box,
/// the table-center destination a fixed-size box around the point. Throws
/// ConfigError when the entry's target does not resolve in this scene.
StructuredPlan plan_for_entry(const sim2d::SceneState& state, const SubtaskEntry& entry,
                              const sim2d::SimConfig& cfg = {});

}  // namespace hivla::plan
