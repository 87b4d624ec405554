#pragma once

#include <vector>

#include "hivla/plan/plan.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::sim2d {

/// Action sequence that completes the plan's subtask from `state`: straight
/// line motion at the action bound, one gripper transition at the goal, and
/// a release first when a pick request arrives while something is held.
/// Throws RuntimeError when the plan's target does not resolve, and
/// ConfigError for a place request with nothing held.
std::vector<Eigen::VectorXd> expert_actions(const SceneState& state, const plan::StructuredPlan& plan,
                                            const SimConfig& cfg = {});

/// First `horizon` expert actions as a chunk, padded with hold actions when
/// the subtask finishes early. Re-invoking on the post-chunk state yields the
/// continuation, so the expert works as a closed-loop chunk policy.
ActionChunk expert_chunk(const SceneState& state, const plan::StructuredPlan& plan, int horizon,
                         const SimConfig& cfg = {});

}  // namespace hivla::sim2d
