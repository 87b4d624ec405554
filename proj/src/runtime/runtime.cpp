#include "hivla/runtime/runtime.hpp"

#include <fstream>
#include <optional>

#include "json.hpp"

#include "hivla/core/errors.hpp"
#include "hivla/model/cfm.hpp"
#include "hivla/plan/corrupt.hpp"
#include "hivla/plan/crop.hpp"
#include "hivla/plan/oracle.hpp"
#include "hivla/sim2d/expert.hpp"
#include "hivla/sim2d/render.hpp"
#include "hivla/sim2d/world.hpp"

namespace hivla::runtime {

using nlohmann::json;

/// Wire token a planner emits instead of a plan once it considers the task
/// complete. Not a JSON plan on purpose: the structured schema stays
/// pick/place/click only.
static constexpr const char* kDoneToken = "done";

std::string OraclePlanner::propose(const PlannerInput&, const sim2d::SceneState& state) {
  const plan::StructuredPlan p = plan::oracle_plan(state, cfg_);
  if (p.action_type == plan::ActionType::done) return kDoneToken;
  return plan::serialize_plan(p);
}

StreamPlanner::StreamPlanner(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("stream planner: cannot open " + path);
  std::string line;
  while (std::getline(in, line)) lines_.push_back(line);
}

std::string StreamPlanner::propose(const PlannerInput&, const sim2d::SceneState&) {
  if (next_ >= lines_.size()) return "";
  return lines_[next_++];
}

sim2d::ActionChunk ScriptedExpertPolicy::act(const sim2d::SceneState& state,
                                             const plan::StructuredPlan& plan) {
  try {
    return sim2d::expert_chunk(state, plan, horizon_, cfg_);
  } catch (const RuntimeError&) {
    // Unresolvable target: hold still and let the replanning loop correct.
  } catch (const ConfigError&) {
    // Place with an empty gripper: same treatment.
  }
  sim2d::ActionChunk hold(horizon_, cfg_.action.d_a);
  for (int i = 0; i < horizon_; ++i) hold.row(i) = cfg_.action.hold_action(state.gripper.open_fraction);
  return hold;
}

void RandomPolicy::reset_episode(std::uint64_t seed) { rng_ = Rng(seed); }

sim2d::ActionChunk RandomPolicy::act(const sim2d::SceneState&, const plan::StructuredPlan&) {
  sim2d::ActionChunk chunk(horizon_, cfg_.action.d_a);
  for (int i = 0; i < horizon_; ++i) {
    for (int j = 0; j + 1 < cfg_.action.d_a; ++j)
      chunk(i, j) = rng_.uniform(-cfg_.action.bound, cfg_.action.bound);
    chunk(i, cfg_.action.d_a - 1) = rng_.uniform();
  }
  return chunk;
}

DiTPolicy::DiTPolicy(model::CheckpointData<float> checkpoint, const sim2d::SimConfig& cfg,
                     bool crop_from_hd)
    : ck_(std::move(checkpoint)), cfg_(cfg), crop_from_hd_(crop_from_hd), rng_(0) {
  ck_.dit.validate();
  ck_.enc.validate();
}

void DiTPolicy::reset_episode(std::uint64_t seed) { rng_ = Rng(seed); }

model::ModelInputs observe(const sim2d::SceneState& state, const plan::StructuredPlan& plan,
                           const model::EncoderConfig& enc, int d_s, bool crop_from_hd,
                           const sim2d::SimConfig& sim_cfg) {
  model::ModelInputs in;
  in.global_image = sim2d::render(state, sim2d::ViewKind::global_lo, sim_cfg);
  in.wrist_image = sim2d::render(state, sim2d::ViewKind::wrist, sim_cfg);
  const Image source =
      crop_from_hd ? sim2d::render(state, sim2d::ViewKind::global_hd, sim_cfg) : in.global_image;
  in.crop = plan::crop_image(source, plan.bbox, enc.crop_side, enc.patch);
  in.token_ids = model::tokenize(plan.next_subtask_description, enc.vocab);
  in.state = sim2d::proprio_vector(state, d_s);
  return in;
}

sim2d::ActionChunk DiTPolicy::act(const sim2d::SceneState& state,
                                  const plan::StructuredPlan& plan) {
  model::ModelInputs in = observe(state, plan, ck_.enc, ck_.dit.d_s, crop_from_hd_, cfg_);
  return model::sample_action_chunk(in, ck_.params, ck_.dit, ck_.enc, cfg_.action, rng_);
}

void RuntimeConfig::validate() const {
  if (replan_interval < 1) throw ConfigError("runtime: replan_interval must be >= 1");
  if (max_plans < 1) throw ConfigError("runtime: max_plans must be >= 1");
  if (max_steps < 1) throw ConfigError("runtime: max_steps must be >= 1");
  if (retry_cap < 1) throw ConfigError("runtime: retry_cap must be >= 1");
  if (bbox_rate < 0 || bbox_rate > 1 || lang_rate < 0 || lang_rate > 1)
    throw ConfigError("runtime: corruption rates must lie in [0, 1]");
}

bool should_replan(const sim2d::SceneState& state, const plan::StructuredPlan& last_plan,
                   int chunks_done, int held_at_issue, const RuntimeConfig& cfg,
                   const sim2d::SimConfig& sim_cfg) {
  if (chunks_done >= cfg.replan_interval) return true;
  return plan::subtask_done(state, last_plan, held_at_issue, sim_cfg);
}

namespace {

void emit(std::ostream* trace, const json& event) {
  if (!trace) return;
  (*trace) << event.dump() << '\n';
}

bool same_subtask(const plan::StructuredPlan& a, const plan::StructuredPlan& b) {
  return a.next_subtask_description == b.next_subtask_description &&
         a.action_type == b.action_type && a.target_object == b.target_object;
}

}  // namespace

EpisodeResult run_episode(const sim2d::TaskSpec& task, Planner& planner, Policy& policy,
                          const RuntimeConfig& cfg, std::uint64_t seed, std::ostream* trace,
                          const sim2d::SimConfig& sim_cfg) {
  cfg.validate();
  sim2d::SceneState state = sim2d::reset(task, seed, sim_cfg);
  policy.reset_episode(derive_seed(seed, "runtime.policy"));
  Rng crng(derive_seed(seed, "runtime.corrupt"));

  EpisodeResult result;
  int consultations = 0;
  int consecutive_retries = 0;
  std::optional<plan::StructuredPlan> proposed;  ///< pre-corruption
  std::optional<plan::StructuredPlan> executed;  ///< what the policy sees
  int held_at_issue = -1;
  int chunks_done = 0;
  Image prev_frame, cur_frame;
  bool have_prev_frame = false;
  std::string end_reason;

  while (true) {
    if (!executed) {
      if (consultations >= cfg.max_plans) {
        end_reason = "max_plans";
        break;
      }
      cur_frame = sim2d::render(state, sim2d::ViewKind::global_hd, sim_cfg);
      PlannerInput input;
      input.overall_goal = state.task.instruction;
      input.previous_subtask = proposed ? proposed->next_subtask_description : "";
      input.gripper_state = state.gripper.open_fraction >= 0.5 ? "open" : "closed";
      input.previous_image = have_prev_frame ? &prev_frame : nullptr;
      input.current_image = &cur_frame;
      const std::string text = planner.propose(input, state);
      ++consultations;
      prev_frame = cur_frame;
      have_prev_frame = true;

      if (text == kDoneToken) {
        end_reason = "sentinel";
        break;
      }
      const plan::PlanParseResult parsed = plan::parse_plan(text);
      if (!parsed.ok()) {
        ++result.parse_failures;
        emit(trace, json{{"event", "replan"},
                         {"step", result.steps},
                         {"reason", "parse_error"},
                         {"code", plan::plan_error_name(parsed.error)}});
        continue;
      }

      // Re-issue of the same unfinished subtask counts against the retry cap.
      if (proposed && same_subtask(parsed.plan, *proposed) &&
          !plan::subtask_done(state, result.executed_plans.back(), held_at_issue, sim_cfg)) {
        ++consecutive_retries;
        ++result.retries;
        if (consecutive_retries > cfg.retry_cap) {
          end_reason = "retry_cap";
          break;
        }
      } else {
        consecutive_retries = 0;
      }

      plan::StructuredPlan acting = parsed.plan;
      bool lang_hit = false, bbox_hit = false;
      if (cfg.lang_rate > 0) {
        const std::vector<plan::SubtaskEntry> vocab = plan::build_scene_vocabulary(state);
        const plan::StructuredPlan mutated = plan::corrupt_language(acting, cfg.lang_rate, crng, vocab);
        if (!same_subtask(mutated, acting)) {
          lang_hit = true;
          plan::SubtaskEntry entry{mutated.next_subtask_description, mutated.action_type,
                                   mutated.target_object};
          acting = plan::plan_for_entry(state, entry, sim_cfg);
        }
      }
      if (cfg.bbox_rate > 0) {
        const plan::StructuredPlan mutated = plan::corrupt_bbox(acting, cfg.bbox_rate, crng);
        bbox_hit = !(mutated.bbox == acting.bbox);
        acting = mutated;
      }

      proposed = parsed.plan;
      executed = acting;
      held_at_issue = state.held_id();
      chunks_done = 0;
      ++result.plans_issued;
      result.proposed_plans.push_back(parsed.plan);
      result.executed_plans.push_back(acting);
      emit(trace, json{{"event", "plan"},
                       {"step", result.steps},
                       {"consultation", consultations},
                       {"proposed", plan::serialize_plan(parsed.plan)},
                       {"executed", plan::serialize_plan(acting)},
                       {"lang_corrupted", lang_hit},
                       {"bbox_corrupted", bbox_hit},
                       {"retry", consecutive_retries}});
    }

    const int step_before = result.steps;
    const sim2d::ActionChunk chunk = policy.act(state, *executed);
    for (Eigen::Index i = 0; i < chunk.rows() && result.steps < cfg.max_steps; ++i) {
      state = sim2d::step(state, chunk.row(i).transpose(), sim_cfg);
      ++result.steps;
    }
    ++chunks_done;
    emit(trace, json{{"event", "chunk"},
                     {"step", step_before},
                     {"plan", result.plans_issued},
                     {"chunk", chunks_done},
                     {"steps_executed", result.steps - step_before}});

    if (sim2d::check_success(state, sim_cfg)) {
      end_reason = "success";
      break;
    }
    if (result.steps >= cfg.max_steps) {
      end_reason = "max_steps";
      break;
    }
    if (should_replan(state, *executed, chunks_done, held_at_issue, cfg, sim_cfg)) {
      const bool finished = plan::subtask_done(state, *executed, held_at_issue, sim_cfg);
      emit(trace, json{{"event", "replan"},
                       {"step", result.steps},
                       {"reason", finished ? "subtask_done" : "cadence"}});
      executed.reset();
    }
  }

  result.success = sim2d::check_success(state, sim_cfg);
  result.end_reason = end_reason;
  emit(trace, json{{"event", "done"},
                   {"step", result.steps},
                   {"success", result.success},
                   {"reason", end_reason},
                   {"plans", result.plans_issued},
                   {"parse_failures", result.parse_failures},
                   {"retries", result.retries}});
  return result;
}

}  // namespace hivla::runtime
