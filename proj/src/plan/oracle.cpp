#include "hivla/plan/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "hivla/core/errors.hpp"
#include "hivla/sim2d/render.hpp"
#include "hivla/sim2d/world.hpp"

namespace hivla::plan {

using sim2d::ObjectRecord;
using sim2d::ResolvedTarget;
using sim2d::SceneState;
using sim2d::SimConfig;
using sim2d::TaskFamily;

namespace {

NormalizedBox object_bbox(const SceneState& state, int id, const SimConfig& cfg) {
  return sim2d::ground_truth_bbox(state, id, cfg.hd_width, cfg.hd_height);
}

NormalizedBox point_bbox(const Eigen::Vector2d& p) {
  const int cx = static_cast<int>(std::llround(p.x() * 1000.0));
  const int cy = static_cast<int>(std::llround(p.y() * 1000.0));
  NormalizedBox box;
  box.xmin = std::clamp(cx - 60, 0, 998);
  box.ymin = std::clamp(cy - 60, 0, 998);
  box.xmax = std::clamp(cx + 60, box.xmin + 1, 1000);
  box.ymax = std::clamp(cy + 60, box.ymin + 1, 1000);
  return box;
}

StructuredPlan done_plan() {
  StructuredPlan p;
  p.next_subtask_description = "task complete";
  p.action_type = ActionType::done;
  p.target_object = "";
  p.bbox = NormalizedBox{0, 0, 1, 1};
  return p;
}

StructuredPlan click_plan(const SceneState& state, const ObjectRecord& obj, const SimConfig& cfg) {
  StructuredPlan p;
  const std::string name = sim2d::object_display_name(state, obj);
  p.next_subtask_description = "click the " + name;
  p.action_type = ActionType::click;
  p.target_object = name;
  p.bbox = object_bbox(state, obj.id, cfg);
  return p;
}

StructuredPlan pick_plan(const SceneState& state, const ObjectRecord& obj, const SimConfig& cfg) {
  StructuredPlan p;
  const std::string name = sim2d::object_display_name(state, obj);
  p.next_subtask_description = "pick up the " + name;
  p.action_type = ActionType::pick;
  p.target_object = name;
  p.bbox = object_bbox(state, obj.id, cfg);
  return p;
}

StructuredPlan place_on_object_plan(const SceneState& state, const ObjectRecord& held,
                                    const ObjectRecord& dest, const SimConfig& cfg) {
  StructuredPlan p;
  const std::string held_name = sim2d::object_display_name(state, held);
  const std::string dest_name = sim2d::object_display_name(state, dest);
  p.next_subtask_description = "place the " + held_name + " on the " + dest_name;
  p.action_type = ActionType::place;
  p.target_object = dest_name;
  p.bbox = object_bbox(state, dest.id, cfg);
  return p;
}

StructuredPlan place_on_center_plan(const SceneState& state, const ObjectRecord& held,
                                    const Eigen::Vector2d& point) {
  StructuredPlan p;
  const std::string held_name = sim2d::object_display_name(state, held);
  p.next_subtask_description = "place the " + held_name + " on the center of the table";
  p.action_type = ActionType::place;
  p.target_object = "center of the table";
  p.bbox = point_bbox(point);
  return p;
}

/// Index of the first unsatisfied stack stage: stage 0 is the base block at
/// the table center, stage i is block i resting on block i-1.
int first_unmet_stack_stage(const SceneState& state, const SimConfig& cfg) {
  const auto& ids = state.task.target_ids;
  const Eigen::Vector2d dest = state.task.destination_point.value();
  const ObjectRecord* base = state.find(ids.at(0));
  if (base->held || (base->center - dest).norm() > cfg.place_tol) return 0;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const ObjectRecord* lower = state.find(ids[i - 1]);
    const ObjectRecord* upper = state.find(ids[i]);
    if (upper->held || (upper->center - lower->center).norm() > cfg.stack_tol ||
        upper->z_order <= lower->z_order) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(ids.size());
}

}  // namespace

StructuredPlan oracle_plan(const SceneState& state, const SimConfig& cfg) {
  if (sim2d::check_success(state, cfg)) return done_plan();

  const TaskFamily family = state.task.family;
  if (family == TaskFamily::click_single || family == TaskFamily::click_among_k) {
    return click_plan(state, *state.find(state.task.target_ids.at(0)), cfg);
  }

  if (family == TaskFamily::pick_place_single || family == TaskFamily::pick_place_among_k) {
    const ObjectRecord* block = state.find(state.task.target_ids.at(0));
    const ObjectRecord* mat = state.find(state.task.destination_id.value());
    if (block->held) return place_on_object_plan(state, *block, *mat, cfg);
    return pick_plan(state, *block, cfg);
  }

  const int stage = first_unmet_stack_stage(state, cfg);
  const ObjectRecord* blk = state.find(state.task.target_ids.at(static_cast<std::size_t>(stage)));
  if (blk->held) {
    if (stage == 0) return place_on_center_plan(state, *blk, state.task.destination_point.value());
    const ObjectRecord* below = state.find(state.task.target_ids.at(static_cast<std::size_t>(stage - 1)));
    return place_on_object_plan(state, *blk, *below, cfg);
  }
  const int held = state.held_id();
  if (held >= 0) {
    // A non-stage block is in hand (possible after corrupted plans); park it
    // on its own stage target so progress can resume.
    const auto& ids = state.task.target_ids;
    const auto it = std::find(ids.begin(), ids.end(), held);
    const ObjectRecord* held_obj = state.find(held);
    if (it != ids.end() && it != ids.begin()) {
      return place_on_object_plan(state, *held_obj,
                                  *state.find(*(it - 1)), cfg);
    }
    return place_on_center_plan(state, *held_obj, state.task.destination_point.value());
  }
  return pick_plan(state, *blk, cfg);
}

bool subtask_done(const SceneState& state, const StructuredPlan& plan, int held_at_issue,
                  const SimConfig& cfg) {
  if (plan.action_type == ActionType::done) return true;

  const auto target = sim2d::resolve_target(state, plan.target_object);
  if (!target.has_value()) return false;

  switch (plan.action_type) {
    case ActionType::pick: {
      if (target->kind != ResolvedTarget::Kind::object) return false;
      const ObjectRecord* obj = state.find(target->id);
      return obj != nullptr && obj->held;
    }
    case ActionType::click:
      return target->kind == ResolvedTarget::Kind::object && state.last_click_id == target->id;
    case ActionType::place: {
      if (held_at_issue < 0) return false;
      const ObjectRecord* obj = state.find(held_at_issue);
      if (obj == nullptr || obj->held) return false;
      if (target->kind == ResolvedTarget::Kind::point) {
        return (obj->center - target->point).norm() <= cfg.place_tol;
      }
      const ObjectRecord* dest = state.find(target->id);
      if (dest == nullptr) return false;
      const double tol = dest->class_name == "block" ? cfg.stack_tol : cfg.place_tol;
      return (obj->center - dest->center).norm() <= tol;
    }
    case ActionType::done:
      return true;
  }
  return false;
}

std::vector<SubtaskEntry> build_scene_vocabulary(const SceneState& state) {
  std::vector<SubtaskEntry> out;
  const auto add = [&out](std::string desc, ActionType type, std::string target) {
    out.push_back(SubtaskEntry{std::move(desc), type, std::move(target)});
  };

  switch (state.task.family) {
    case TaskFamily::click_single:
    case TaskFamily::click_among_k: {
      for (const auto& o : state.objects) {
        const std::string name = sim2d::object_display_name(state, o);
        add("click the " + name, ActionType::click, name);
      }
      break;
    }
    case TaskFamily::pick_place_single:
    case TaskFamily::pick_place_among_k: {
      const ObjectRecord* mat = state.find(state.task.destination_id.value());
      const std::string mat_name = sim2d::object_display_name(state, *mat);
      for (const auto& o : state.objects) {
        if (o.class_name != "block") continue;
        const std::string name = sim2d::object_display_name(state, o);
        add("pick up the " + name, ActionType::pick, name);
        add("place the " + name + " on the " + mat_name, ActionType::place, mat_name);
      }
      break;
    }
    case TaskFamily::stack_k: {
      const auto& ids = state.task.target_ids;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const ObjectRecord* blk = state.find(ids[i]);
        const std::string name = sim2d::object_display_name(state, *blk);
        add("pick up the " + name, ActionType::pick, name);
        if (i == 0) {
          add("place the " + name + " on the center of the table", ActionType::place,
              "center of the table");
        } else {
          const std::string below = sim2d::object_display_name(state, *state.find(ids[i - 1]));
          add("place the " + name + " on the " + below, ActionType::place, below);
        }
      }
      break;
    }
  }
  return out;
}

StructuredPlan plan_for_entry(const SceneState& state, const SubtaskEntry& entry,
                              const SimConfig& cfg) {
  StructuredPlan p;
  p.next_subtask_description = entry.description;
  p.action_type = entry.action_type;
  p.target_object = entry.target_object;
  const auto target = sim2d::resolve_target(state, entry.target_object);
  if (!target) throw ConfigError("subtask target does not resolve: " + entry.target_object);
  if (target->kind == ResolvedTarget::Kind::object) {
    p.bbox = object_bbox(state, target->id, cfg);
  } else {
    p.bbox = point_bbox(target->point);
  }
  return p;
}

}  // namespace hivla::plan
