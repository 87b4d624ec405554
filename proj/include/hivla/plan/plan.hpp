#pragma once

#include <string>

namespace hivla::plan {

/// Skill selector carried by a plan. `done` is an internal sentinel that
/// signals task completion to the runtime; it never appears on the wire.
enum class ActionType { pick, place, click, done };

const char* action_type_name(ActionType t);

/// Axis-aligned box in the resolution-independent integer coordinate frame:
/// both axes span [0, 1000] regardless of the pixel size of the source frame,
/// with y before x ([ymin, xmin, ymax, xmax]).
struct NormalizedBox {
  int ymin = 0;
  int xmin = 0;
  int ymax = 0;
  int xmax = 0;

  bool valid() const {
    return 0 <= ymin && ymin < ymax && ymax <= 1000 && 0 <= xmin && xmin < xmax && xmax <= 1000;
  }
  long long area() const {
    return static_cast<long long>(ymax - ymin) * static_cast<long long>(xmax - xmin);
  }
  bool operator==(const NormalizedBox&) const = default;
};

/// One step of the high-level plan: what to do next, which object it concerns
/// and where that object sits in the current global frame.
struct StructuredPlan {
  std::string next_subtask_description;
  ActionType action_type = ActionType::pick;
  std::string target_object;
  NormalizedBox bbox;

  bool operator==(const StructuredPlan&) const = default;
};

enum class PlanError {
  none,
  malformed_json,
  trailing_text,
  missing_key,
  extra_key,
  bad_field_type,
  empty_description,
  unknown_action_type,
  bbox_shape,
  bbox_out_of_range,
  bbox_inverted,
};

const char* plan_error_name(PlanError e);

struct PlanParseResult {
  StructuredPlan plan;
  PlanError error = PlanError::none;
  std::string detail;

  bool ok() const { return error == PlanError::none; }
};

/// Strict parse of one plan message. The text must be a single JSON object
/// with exactly the four plan keys; anything else yields a specific error
/// code rather than a best-effort plan.
PlanParseResult parse_plan(const std::string& text);

/// Canonical wire form: one line, keys in fixed order, no extra whitespace.
/// Equal plans serialize to identical bytes. Throws ConfigError for the
/// `done` sentinel or an invalid bbox.
std::string serialize_plan(const StructuredPlan& plan);

/// Intersection-over-union of two boxes in the integer [0, 1000] frame.
double iou(const NormalizedBox& a, const NormalizedBox& b);

}  // namespace hivla::plan
