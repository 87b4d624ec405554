#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hivla/core/action_space.hpp"

namespace hivla::sim2d {

/// One action chunk: horizon rows by d_a columns.
using ActionChunk = Eigen::MatrixXd;

enum class ObjColor { red, green, blue, yellow };
enum class ObjShape { rect, circle };

const char* color_name(ObjColor c);
Eigen::Vector3f color_rgb(ObjColor c);

enum class TaskFamily { click_single, click_among_k, pick_place_single, pick_place_among_k, stack_k };

/// How distractors are distinguished from the target: by color, or by spatial
/// position with identical appearance (left / middle / right wording).
enum class TaskVariant { color, spatial };

struct ObjectRecord {
  int id = 0;
  std::string class_name;
  ObjColor color = ObjColor::red;
  ObjShape shape = ObjShape::rect;
  Eigen::Vector2d center{0.5, 0.5};
  Eigen::Vector2d half_extent{0.05, 0.05};
  bool held = false;
  int z_order = 0;

  bool movable() const { return class_name == "block"; }
  Eigen::Vector2d aabb_min() const { return center - half_extent; }
  Eigen::Vector2d aabb_max() const { return center + half_extent; }
  bool contains(const Eigen::Vector2d& p) const {
    return (p.array() >= aabb_min().array()).all() && (p.array() <= aabb_max().array()).all();
  }
};

inline bool aabb_overlap(const ObjectRecord& a, const ObjectRecord& b, double gap = 0.0) {
  return (a.aabb_min().array() - gap < b.aabb_max().array()).all() &&
         (b.aabb_min().array() - gap < a.aabb_max().array()).all();
}

struct TaskSpec {
  std::string name;
  TaskFamily family = TaskFamily::click_single;
  std::string instruction;
  std::vector<int> target_ids;
  std::optional<int> destination_id;
  std::optional<Eigen::Vector2d> destination_point;

  int k = 1;
  TaskVariant variant = TaskVariant::color;
  /// Colors in object-manifest order (blocks/bells first, then the mat for
  /// pick-and-place families).
  std::vector<ObjColor> colors;
  /// For spatial variants: which position slot (by ascending x) is the
  /// target. Resolved into target_ids at reset time, once positions exist.
  int spatial_slot = 0;
};

struct GripperState {
  Eigen::Vector2d pos{0.5, 0.5};
  double open_fraction = 1.0;
};

struct SceneState {
  std::vector<ObjectRecord> objects;
  GripperState gripper;
  TaskSpec task;
  int step_index = 0;
  Eigen::Vector3f background{0.82f, 0.82f, 0.82f};
  int last_click_id = -1;
  std::optional<Eigen::Vector2d> held_offset;

  const ObjectRecord* find(int id) const {
    for (const auto& o : objects) {
      if (o.id == id) return &o;
    }
    return nullptr;
  }
  int held_id() const {
    for (const auto& o : objects) {
      if (o.held) return o.id;
    }
    return -1;
  }
};

struct SimConfig {
  ActionSpace action{};
  double grasp_threshold = 0.5;
  double place_tol = 0.05;
  double stack_tol = 0.04;
  int max_reset_attempts = 1000;

  int global_width = 192;
  int global_height = 108;
  int hd_width = 960;
  int hd_height = 540;
  int wrist_size = 96;
  double wrist_half_extent = 0.16;

  int d_s = 3;
};

bool exactly_equal(const SceneState& a, const SceneState& b);

/// Proprioceptive vector: gripper x, gripper y, openness, zero padding up to d_s.
Eigen::VectorXd proprio_vector(const SceneState& state, int d_s);

}  // namespace hivla::sim2d
