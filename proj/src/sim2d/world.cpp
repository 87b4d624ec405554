#include "hivla/sim2d/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/plan/metrics.hpp"

namespace hivla::sim2d {

namespace {

constexpr double kWallMargin = 0.06;
constexpr double kMinGap = 0.03;
constexpr double kBellRadius = 0.05;
constexpr double kBlockHalf = 0.045;
constexpr double kMatHalf = 0.09;

struct ObjectTemplate {
  std::string class_name;
  ObjShape shape;
  Eigen::Vector2d half_extent;
};

std::vector<ObjectTemplate> object_manifest(const TaskSpec& task) {
  std::vector<ObjectTemplate> out;
  switch (task.family) {
    case TaskFamily::click_single:
    case TaskFamily::click_among_k:
      for (int i = 0; i < task.k; ++i) {
        out.push_back({"bell", ObjShape::circle, {kBellRadius, kBellRadius}});
      }
      break;
    case TaskFamily::pick_place_single:
    case TaskFamily::pick_place_among_k:
      for (int i = 0; i < task.k; ++i) {
        out.push_back({"block", ObjShape::rect, {kBlockHalf, kBlockHalf}});
      }
      out.push_back({"mat", ObjShape::rect, {kMatHalf, kMatHalf}});
      break;
    case TaskFamily::stack_k:
      for (int i = 0; i < task.k; ++i) {
        out.push_back({"block", ObjShape::rect, {kBlockHalf, kBlockHalf}});
      }
      break;
  }
  return out;
}

void validate_task(const TaskSpec& task) {
  if (task.instruction.empty()) throw ConfigError("task instruction is empty");
  if (task.k < 1) throw ConfigError("task k must be >= 1");
  if (task.family == TaskFamily::stack_k && task.k < 2) {
    throw ConfigError("stack_k requires at least two blocks");
  }
  const std::size_t expected = object_manifest(task).size();
  if (task.colors.size() != expected) {
    throw ConfigError("task colors must cover the full object manifest");
  }
}

int topmost(const std::vector<const ObjectRecord*>& candidates, const Eigen::Vector2d& p) {
  const ObjectRecord* best = nullptr;
  for (const ObjectRecord* o : candidates) {
    if (best == nullptr) {
      best = o;
      continue;
    }
    if (o->z_order != best->z_order) {
      if (o->z_order > best->z_order) best = o;
      continue;
    }
    const double da = (o->center - p).norm();
    const double db = (best->center - p).norm();
    if (da != db) {
      if (da < db) best = o;
      continue;
    }
    if (o->id < best->id) best = o;
  }
  return best ? best->id : -1;
}

}  // namespace

SceneState reset(const TaskSpec& task, std::uint64_t seed, const SimConfig& cfg) {
  validate_task(task);
  cfg.action.validate();
  Rng rng(derive_seed(seed, "sim2d.reset",
                      static_cast<std::uint64_t>(task.family) * 16 + static_cast<std::uint64_t>(task.k)));

  SceneState state;
  state.task = task;

  const float base = static_cast<float>(rng.uniform(0.74, 0.90));
  state.background = Eigen::Vector3f(base + static_cast<float>(rng.uniform(-0.02, 0.02)),
                                     base + static_cast<float>(rng.uniform(-0.02, 0.02)),
                                     base + static_cast<float>(rng.uniform(-0.02, 0.02)));

  const std::vector<ObjectTemplate> manifest = object_manifest(task);
  int attempts = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    ObjectRecord obj;
    obj.id = static_cast<int>(i);
    obj.class_name = manifest[i].class_name;
    obj.shape = manifest[i].shape;
    obj.half_extent = manifest[i].half_extent;
    obj.color = task.colors[i];

    bool placed = false;
    while (!placed) {
      if (++attempts > cfg.max_reset_attempts) {
        throw RuntimeError("object placement failed after " +
                           std::to_string(cfg.max_reset_attempts) + " attempts");
      }
      const double lox = kWallMargin + obj.half_extent.x();
      const double hix = 1.0 - kWallMargin - obj.half_extent.x();
      const double loy = kWallMargin + obj.half_extent.y();
      const double hiy = 1.0 - kWallMargin - obj.half_extent.y();
      if (lox >= hix || loy >= hiy) throw ConfigError("object too large for the workspace");
      obj.center = Eigen::Vector2d(rng.uniform(lox, hix), rng.uniform(loy, hiy));
      if (task.destination_point.has_value()) {
        // Keep spawns clear of the build site: an object that starts inside the
        // footprint of a future placement would end up buried underneath it,
        // and a top-down grasp could never retrieve it.
        const Eigen::Vector2d d = obj.center - task.destination_point.value();
        const double clearance = 2.0 * std::max(obj.half_extent.x(), obj.half_extent.y()) + kMinGap;
        if (std::max(std::abs(d.x()), std::abs(d.y())) < clearance) continue;
      }
      placed = std::none_of(state.objects.begin(), state.objects.end(),
                            [&obj](const ObjectRecord& other) { return aabb_overlap(obj, other, kMinGap); });
    }
    state.objects.push_back(obj);
  }

  state.gripper.pos = Eigen::Vector2d(rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75));
  state.gripper.open_fraction = 1.0;

  if (task.variant == TaskVariant::spatial) {
    std::vector<int> ids;
    for (const auto& o : state.objects) ids.push_back(o.id);
    std::sort(ids.begin(), ids.end(), [&state](int a, int b) {
      return state.find(a)->center.x() < state.find(b)->center.x();
    });
    state.task.target_ids = {ids[static_cast<std::size_t>(task.spatial_slot)]};
  }
  if (state.task.target_ids.empty()) throw ConfigError("task has no target object");
  for (const int id : state.task.target_ids) {
    if (state.find(id) == nullptr) throw ConfigError("task target id out of range");
  }
  return state;
}

SceneState step(const SceneState& state, const Eigen::VectorXd& action, const SimConfig& cfg) {
  if (action.size() != cfg.action.d_a) throw ConfigError("action has wrong dimension");
  if (!action.allFinite()) throw ConfigError("action is not finite");

  SceneState next = state;
  const double bound = cfg.action.bound;
  const double dx = std::clamp(action(0), -bound, bound);
  const double dy = std::clamp(action(1), -bound, bound);
  const double g_target = std::clamp(action(cfg.action.d_a - 1), 0.0, 1.0);

  Eigen::Vector2d lo(0.0, 0.0);
  Eigen::Vector2d hi(1.0, 1.0);
  if (next.held_offset.has_value()) {
    lo = lo.cwiseMax(-next.held_offset.value());
    hi = hi.cwiseMin(Eigen::Vector2d(1.0, 1.0) - next.held_offset.value());
  }
  next.gripper.pos.x() = std::clamp(state.gripper.pos.x() + dx, lo.x(), hi.x());
  next.gripper.pos.y() = std::clamp(state.gripper.pos.y() + dy, lo.y(), hi.y());

  if (next.held_offset.has_value()) {
    for (auto& o : next.objects) {
      if (o.held) o.center = next.gripper.pos + next.held_offset.value();
    }
  }

  const double old_open = state.gripper.open_fraction;
  next.gripper.open_fraction = g_target;
  const bool closing = old_open >= cfg.grasp_threshold && g_target < cfg.grasp_threshold;
  const bool opening = old_open < cfg.grasp_threshold && g_target >= cfg.grasp_threshold;

  if (closing) {
    std::vector<const ObjectRecord*> under;
    for (const auto& o : next.objects) {
      if (o.contains(next.gripper.pos)) under.push_back(&o);
    }
    const int clicked = topmost(under, next.gripper.pos);
    if (clicked >= 0) next.last_click_id = clicked;

    std::vector<const ObjectRecord*> graspable;
    for (const ObjectRecord* o : under) {
      if (o->movable()) graspable.push_back(o);
    }
    const int grasped = topmost(graspable, next.gripper.pos);
    if (grasped >= 0) {
      for (auto& o : next.objects) {
        if (o.id == grasped) {
          o.held = true;
          next.held_offset = o.center - next.gripper.pos;
        }
      }
    }
  } else if (opening && next.held_offset.has_value()) {
    for (auto& o : next.objects) {
      if (!o.held) continue;
      o.held = false;
      int below = -1;
      for (const auto& other : next.objects) {
        if (other.id != o.id && aabb_overlap(o, other)) below = std::max(below, other.z_order);
      }
      o.z_order = below + 1;
    }
    next.held_offset.reset();
  }

  next.step_index = state.step_index + 1;
  return next;
}

bool check_success(const SceneState& state, const SimConfig& cfg) {
  const TaskSpec& task = state.task;
  switch (task.family) {
    case TaskFamily::click_single:
    case TaskFamily::click_among_k:
      return state.last_click_id == task.target_ids.at(0);
    case TaskFamily::pick_place_single:
    case TaskFamily::pick_place_among_k: {
      const ObjectRecord* block = state.find(task.target_ids.at(0));
      const ObjectRecord* mat = task.destination_id ? state.find(*task.destination_id) : nullptr;
      if (block == nullptr || mat == nullptr) return false;
      return !block->held && (block->center - mat->center).norm() <= cfg.place_tol;
    }
    case TaskFamily::stack_k: {
      if (!task.destination_point.has_value()) return false;
      const ObjectRecord* base = state.find(task.target_ids.at(0));
      if (base == nullptr || base->held) return false;
      if ((base->center - task.destination_point.value()).norm() > cfg.place_tol) return false;
      for (std::size_t i = 1; i < task.target_ids.size(); ++i) {
        const ObjectRecord* lower = state.find(task.target_ids[i - 1]);
        const ObjectRecord* upper = state.find(task.target_ids[i]);
        if (upper == nullptr || lower == nullptr || upper->held) return false;
        if ((upper->center - lower->center).norm() > cfg.stack_tol) return false;
        if (upper->z_order <= lower->z_order) return false;
      }
      return true;
    }
  }
  return false;
}

std::optional<ResolvedTarget> resolve_target(const SceneState& state, const std::string& name) {
  std::string n = hivla::plan::normalize_name(name);
  if (n.starts_with("the ")) n = n.substr(4);

  if (n == "center of the table" || n == "table center" || n == "center") {
    ResolvedTarget t;
    t.kind = ResolvedTarget::Kind::point;
    t.point = state.task.destination_point.value_or(Eigen::Vector2d(0.5, 0.5));
    return t;
  }

  std::vector<std::string> words;
  std::istringstream ss(n);
  for (std::string w; ss >> w;) words.push_back(w);
  if (words.empty() || words.size() > 2) return std::nullopt;

  const std::string cls = words.back();
  if (cls != "block" && cls != "bell" && cls != "mat") return std::nullopt;
  std::vector<const ObjectRecord*> of_class;
  for (const auto& o : state.objects) {
    if (o.class_name == cls) of_class.push_back(&o);
  }
  if (of_class.empty()) return std::nullopt;

  const ObjectRecord* found = nullptr;
  if (words.size() == 1) {
    if (of_class.size() != 1) return std::nullopt;
    found = of_class[0];
  } else {
    const std::string& adj = words[0];
    bool is_color = false;
    for (const ObjColor c : {ObjColor::red, ObjColor::green, ObjColor::blue, ObjColor::yellow}) {
      if (adj == color_name(c)) {
        is_color = true;
        for (const ObjectRecord* o : of_class) {
          if (o->color == c) {
            if (found != nullptr) return std::nullopt;
            found = o;
          }
        }
      }
    }
    if (!is_color) {
      if (adj != "left" && adj != "middle" && adj != "right") return std::nullopt;
      std::vector<const ObjectRecord*> sorted = of_class;
      std::sort(sorted.begin(), sorted.end(), [](const ObjectRecord* a, const ObjectRecord* b) {
        return a->center.x() < b->center.x();
      });
      if (adj == "left") {
        found = sorted.front();
      } else if (adj == "right") {
        found = sorted.back();
      } else if (sorted.size() % 2 == 1) {
        found = sorted[sorted.size() / 2];
      }
    }
  }
  if (found == nullptr) return std::nullopt;
  ResolvedTarget t;
  t.kind = ResolvedTarget::Kind::object;
  t.id = found->id;
  return t;
}

std::string object_display_name(const SceneState& state, const ObjectRecord& obj) {
  if (state.task.variant == TaskVariant::spatial) {
    std::vector<const ObjectRecord*> of_class;
    for (const auto& o : state.objects) {
      if (o.class_name == obj.class_name) of_class.push_back(&o);
    }
    std::sort(of_class.begin(), of_class.end(), [](const ObjectRecord* a, const ObjectRecord* b) {
      return a->center.x() < b->center.x();
    });
    if (of_class.size() >= 2) {
      for (std::size_t i = 0; i < of_class.size(); ++i) {
        if (of_class[i]->id != obj.id) continue;
        if (i == 0) return "left " + obj.class_name;
        if (i + 1 == of_class.size()) return "right " + obj.class_name;
        return "middle " + obj.class_name;
      }
    }
  }
  int same_class = 0;
  for (const auto& o : state.objects) {
    if (o.class_name == obj.class_name) ++same_class;
  }
  if (same_class == 1) return obj.class_name;
  return std::string(color_name(obj.color)) + " " + obj.class_name;
}

bool exactly_equal(const SceneState& a, const SceneState& b) {
  if (a.objects.size() != b.objects.size()) return false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const ObjectRecord& x = a.objects[i];
    const ObjectRecord& y = b.objects[i];
    if (x.id != y.id || x.class_name != y.class_name || x.color != y.color || x.shape != y.shape ||
        x.held != y.held || x.z_order != y.z_order) {
      return false;
    }
    if ((x.center.array() != y.center.array()).any()) return false;
    if ((x.half_extent.array() != y.half_extent.array()).any()) return false;
  }
  if ((a.gripper.pos.array() != b.gripper.pos.array()).any()) return false;
  if (a.gripper.open_fraction != b.gripper.open_fraction) return false;
  if (a.step_index != b.step_index || a.last_click_id != b.last_click_id) return false;
  if ((a.background.array() != b.background.array()).any()) return false;
  if (a.held_offset.has_value() != b.held_offset.has_value()) return false;
  if (a.held_offset && (a.held_offset->array() != b.held_offset->array()).any()) return false;
  return true;
}

Eigen::VectorXd proprio_vector(const SceneState& state, int d_s) {
  if (d_s < 3) throw ConfigError("proprio dim must be >= 3");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d_s);
  v(0) = state.gripper.pos.x();
  v(1) = state.gripper.pos.y();
  v(2) = state.gripper.open_fraction;
  return v;
}

}  // namespace hivla::sim2d
