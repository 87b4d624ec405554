#pragma once

#include <span>
#include <string>
#include <vector>

#include "hivla/core/rng.hpp"
#include "hivla/plan/plan.hpp"

namespace hivla::plan {

/// One admissible subtask for the current scene, used as a replacement pool
/// when corrupting the language channel.
struct SubtaskEntry {
  std::string description;
  ActionType action_type = ActionType::pick;
  std::string target_object;

  bool operator==(const SubtaskEntry&) const = default;
};

/// With probability `rate`, shifts the plan's bbox by one full box extent in
/// each axis (random sign per axis), clamping the shift so the box stays
/// inside [0, 1000] without changing size. A full shift makes the corrupted
/// box disjoint from the original unless clamping truncated the shift.
/// The language fields are left untouched.
StructuredPlan corrupt_bbox(const StructuredPlan& plan, double rate, Rng& rng);

/// With probability `rate`, replaces the plan's description, action_type and
/// target_object with a different entry drawn uniformly from `vocabulary`.
/// The bbox is left untouched. Requires at least two distinct entries.
StructuredPlan corrupt_language(const StructuredPlan& plan, double rate, Rng& rng,
                                std::span<const SubtaskEntry> vocabulary);

}  // namespace hivla::plan
