#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "hivla/core/image.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/model/cfm.hpp"
#include "hivla/model/checkpoint.hpp"
#include "hivla/plan/plan.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::runtime {

/// What a planner sees at each consultation: the task goal, its own last
/// subtask, a coarse gripper status string, and the visual history.
struct PlannerInput {
  std::string overall_goal;
  std::string previous_subtask;           ///< empty on the first consultation
  std::string gripper_state;              ///< "open" or "closed"
  const Image* previous_image = nullptr;  ///< frame at the previous consultation
  const Image* current_image = nullptr;   ///< always present
};

/// High-level planner. Emits raw wire text; the runtime parses and validates
/// it, so a planner can never crash an episode with malformed output.
class Planner {
 public:
  virtual ~Planner() = default;
  virtual const char* name() const = 0;
  virtual std::string propose(const PlannerInput& input, const sim2d::SceneState& state) = 0;
};

/// Deterministic scripted planner backed by privileged simulator state.
class OraclePlanner : public Planner {
 public:
  explicit OraclePlanner(const sim2d::SimConfig& cfg = {}) : cfg_(cfg) {}
  const char* name() const override { return "oracle"; }
  std::string propose(const PlannerInput& input, const sim2d::SceneState& state) override;

 private:
  sim2d::SimConfig cfg_;
};

/// Replays pre-recorded wire lines from a file, one per consultation;
/// returns an empty string once exhausted. Stands in for an external
/// vision-language planner in tests.
class StreamPlanner : public Planner {
 public:
  explicit StreamPlanner(const std::string& path);
  const char* name() const override { return "stream"; }
  std::string propose(const PlannerInput& input, const sim2d::SceneState& state) override;

 private:
  std::vector<std::string> lines_;
  std::size_t next_ = 0;
};

/// Low-level chunk policy: one H-step action chunk per call, conditioned on
/// the current plan.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual const char* name() const = 0;
  /// Called once per episode before any chunk; seeds internal noise draws.
  virtual void reset_episode(std::uint64_t seed) { (void)seed; }
  virtual sim2d::ActionChunk act(const sim2d::SceneState& state,
                                 const plan::StructuredPlan& plan) = 0;
};

/// Privileged scripted expert wrapped as a chunk policy. Plans it cannot act
/// on (unresolvable target, place with an empty gripper) yield hold chunks,
/// leaving correction to the replanning loop.
class ScriptedExpertPolicy : public Policy {
 public:
  explicit ScriptedExpertPolicy(int horizon, const sim2d::SimConfig& cfg = {})
      : horizon_(horizon), cfg_(cfg) {}
  const char* name() const override { return "expert"; }
  sim2d::ActionChunk act(const sim2d::SceneState& state, const plan::StructuredPlan& plan) override;

 private:
  int horizon_;
  sim2d::SimConfig cfg_;
};

/// Uniform-noise control baseline.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(int horizon, const sim2d::SimConfig& cfg = {})
      : horizon_(horizon), cfg_(cfg), rng_(0) {}
  const char* name() const override { return "random"; }
  void reset_episode(std::uint64_t seed) override;
  sim2d::ActionChunk act(const sim2d::SceneState& state, const plan::StructuredPlan& plan) override;

 private:
  int horizon_;
  sim2d::SimConfig cfg_;
  Rng rng_;
};

/// Renders and packages everything the action model consumes for one
/// decision: low-res global frame, wrist frame, the plan's bbox crop (from
/// the high-definition buffer, or from the low-res buffer when
/// `crop_from_hd` is false), language tokens, and the proprioceptive vector.
model::ModelInputs observe(const sim2d::SceneState& state, const plan::StructuredPlan& plan,
                           const model::EncoderConfig& enc, int d_s, bool crop_from_hd = true,
                           const sim2d::SimConfig& sim_cfg = {});

/// Learned flow-matching policy: renders the scene, crops the plan's bbox,
/// encodes the three conditioning streams, and samples one action chunk.
class DiTPolicy : public Policy {
 public:
  /// `crop_from_hd` selects the crop source frame: the high-definition
  /// buffer (default) or the low-res global buffer (ablation).
  DiTPolicy(model::CheckpointData<float> checkpoint, const sim2d::SimConfig& cfg = {},
            bool crop_from_hd = true);
  const char* name() const override { return "dit"; }
  void reset_episode(std::uint64_t seed) override;
  sim2d::ActionChunk act(const sim2d::SceneState& state, const plan::StructuredPlan& plan) override;

 private:
  model::CheckpointData<float> ck_;
  sim2d::SimConfig cfg_;
  bool crop_from_hd_;
  Rng rng_;
};

/// Closed-loop schedule and failure handling for one episode.
struct RuntimeConfig {
  int replan_interval = 1;  ///< policy chunks between planner consultations
  int max_plans = 64;       ///< planner consultations (parse failures included)
  int max_steps = 600;      ///< environment steps, hard cap
  int retry_cap = 3;        ///< consecutive re-issues of one unfinished subtask
  double bbox_rate = 0.0;   ///< per-plan bbox corruption probability
  double lang_rate = 0.0;   ///< per-plan language corruption probability

  void validate() const;
};

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  int plans_issued = 0;  ///< accepted (parsed) plans
  int parse_failures = 0;
  int retries = 0;  ///< re-issues of an unfinished subtask
  std::string end_reason;
  std::vector<plan::StructuredPlan> proposed_plans;  ///< as the planner emitted them
  std::vector<plan::StructuredPlan> executed_plans;  ///< post-corruption
};

/// Pure replanning predicate: consult the planner again once the cadence
/// interval has elapsed or the current subtask is already satisfied.
bool should_replan(const sim2d::SceneState& state, const plan::StructuredPlan& last_plan,
                   int chunks_done, int held_at_issue, const RuntimeConfig& cfg,
                   const sim2d::SimConfig& sim_cfg = {});

/// Runs one full episode: plan, act at the configured cadence, replan on
/// completion or failure, terminate on the done sentinel, success, or a
/// budget. Deterministic given (task, seed, cfg, policy checkpoint). When
/// `trace` is non-null, line-delimited JSON events are appended to it.
EpisodeResult run_episode(const sim2d::TaskSpec& task, Planner& planner, Policy& policy,
                          const RuntimeConfig& cfg, std::uint64_t seed, std::ostream* trace,
                          const sim2d::SimConfig& sim_cfg = {});

}  // namespace hivla::runtime
