#include "hivla/sim2d/expert.hpp"

#include <cmath>

#include "hivla/core/errors.hpp"
#include "hivla/sim2d/world.hpp"

namespace hivla::sim2d {

namespace {

constexpr int kMaxExpertSteps = 2000;
constexpr double kArriveTol = 1e-9;

Eigen::VectorXd motion_action(const SimConfig& cfg, double dx, double dy, double g) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(cfg.action.d_a);
  a(0) = dx;
  a(1) = dy;
  a(cfg.action.d_a - 1) = g;
  return a;
}

/// Emits clamped straight-line steps until the gripper reaches `goal`,
/// keeping the gripper channel at `g_keep`, simulating as it goes.
void move_to(SceneState& sim, const Eigen::Vector2d& goal, double g_keep,
             std::vector<Eigen::VectorXd>& out, const SimConfig& cfg) {
  int guard = 0;
  while ((goal - sim.gripper.pos).cwiseAbs().maxCoeff() > kArriveTol) {
    if (++guard > kMaxExpertSteps) throw RuntimeError("expert could not reach its waypoint");
    const Eigen::Vector2d d = goal - sim.gripper.pos;
    const double b = cfg.action.bound;
    out.push_back(motion_action(cfg, std::clamp(d.x(), -b, b), std::clamp(d.y(), -b, b), g_keep));
    sim = step(sim, out.back(), cfg);
  }
}

void set_gripper(SceneState& sim, double g, std::vector<Eigen::VectorXd>& out, const SimConfig& cfg) {
  out.push_back(motion_action(cfg, 0.0, 0.0, g));
  sim = step(sim, out.back(), cfg);
}

}  // namespace

std::vector<Eigen::VectorXd> expert_actions(const SceneState& state, const plan::StructuredPlan& plan,
                                            const SimConfig& cfg) {
  std::vector<Eigen::VectorXd> out;
  if (plan.action_type == plan::ActionType::done) return out;

  const auto target = resolve_target(state, plan.target_object);
  if (!target.has_value()) {
    throw RuntimeError("expert cannot resolve target: " + plan.target_object);
  }

  SceneState sim = state;
  switch (plan.action_type) {
    case plan::ActionType::pick: {
      if (target->kind != ResolvedTarget::Kind::object) {
        throw RuntimeError("pick target must be an object");
      }
      if (sim.held_id() >= 0) set_gripper(sim, 1.0, out, cfg);
      if (sim.gripper.open_fraction < cfg.grasp_threshold) set_gripper(sim, 1.0, out, cfg);
      move_to(sim, sim.find(target->id)->center, 1.0, out, cfg);
      set_gripper(sim, 0.0, out, cfg);
      break;
    }
    case plan::ActionType::place: {
      const int held = sim.held_id();
      if (held < 0) throw ConfigError("place requested with nothing held");
      const Eigen::Vector2d dest =
          target->kind == ResolvedTarget::Kind::object ? sim.find(target->id)->center : target->point;
      move_to(sim, dest - sim.held_offset.value(), 0.0, out, cfg);
      set_gripper(sim, 1.0, out, cfg);
      break;
    }
    case plan::ActionType::click: {
      if (target->kind != ResolvedTarget::Kind::object) {
        throw RuntimeError("click target must be an object");
      }
      if (sim.gripper.open_fraction < cfg.grasp_threshold) set_gripper(sim, 1.0, out, cfg);
      move_to(sim, sim.find(target->id)->center, 1.0, out, cfg);
      set_gripper(sim, 0.0, out, cfg);
      set_gripper(sim, 1.0, out, cfg);
      break;
    }
    case plan::ActionType::done:
      break;
  }
  return out;
}

ActionChunk expert_chunk(const SceneState& state, const plan::StructuredPlan& plan, int horizon,
                         const SimConfig& cfg) {
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  const std::vector<Eigen::VectorXd> seq = expert_actions(state, plan, cfg);

  ActionChunk chunk(horizon, cfg.action.d_a);
  SceneState sim = state;
  for (int i = 0; i < horizon; ++i) {
    Eigen::VectorXd a;
    if (i < static_cast<int>(seq.size())) {
      a = seq[static_cast<std::size_t>(i)];
    } else {
      a = cfg.action.hold_action(sim.gripper.open_fraction);
    }
    chunk.row(i) = a.transpose();
    sim = step(sim, a, cfg);
  }
  return chunk;
}

}  // namespace hivla::sim2d
