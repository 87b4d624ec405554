#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hivla/model/cfm.hpp"
#include "hivla/plan/plan.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::harness {

struct DatasetConfig {
  std::vector<std::string> tasks;
  int episodes_per_task = 100;  ///< successful episodes kept per task
  int horizon = 16;             ///< expert chunk length
  int max_steps = 600;          ///< per-episode step budget before it counts as failed
  std::uint64_t seed = 1;       ///< episode i of a task uses seed + attempt index
  double max_failure_rate = 0.05;
  std::string out_dir;

  void validate() const;
};

/// One planner consultation inside a recorded episode: the plan that was
/// acted on and the step index its chunk started at.
struct ChunkRecord {
  int step = 0;
  plan::StructuredPlan plan;
};

/// A stored episode. Observations are not stored: the simulator is
/// deterministic, so replaying `actions` from `reset(task, seed)` rebuilds
/// every intermediate state exactly.
struct EpisodeRecord {
  std::string task_name;
  std::uint64_t seed = 0;
  int horizon = 0;
  int d_a = 0;
  int steps = 0;
  bool success = false;
  std::vector<ChunkRecord> chunks;
  Eigen::MatrixXd actions;  ///< steps x d_a, exactly as executed
  std::string dir;          ///< where this episode was loaded from
};

struct DatasetSummary {
  std::string root;
  std::string index_path;
  std::vector<std::string> episode_dirs;  ///< relative to root, index order
  std::map<std::string, int> successes;   ///< per task
  std::map<std::string, int> failures;    ///< per task
  std::uint64_t seed_base = 0;
  std::uint64_t seeds_used = 0;  ///< attempts consumed; train seeds are [base, base+used)
};

/// Rolls out the privileged planner with the scripted expert over every task
/// in the config, keeps successful episodes, and writes one directory per
/// episode (meta.json + actions.bin) plus a dataset index. Deterministic:
/// the same config reproduces byte-identical files. Throws RuntimeError if
/// any task's failure rate exceeds the configured budget, since the expert
/// is expected to be near-perfect.
DatasetSummary generate_dataset(const DatasetConfig& cfg, const sim2d::SimConfig& sim = {});

/// Reads a dataset index written by generate_dataset.
DatasetSummary read_index(const std::string& dataset_dir);

EpisodeRecord load_episode(const std::string& episode_dir);

/// State right before chunk `chunk_index` was planned, rebuilt by replaying
/// the recorded actions through the simulator.
sim2d::SceneState replay_to_chunk(const EpisodeRecord& ep, std::size_t chunk_index,
                                  const sim2d::SimConfig& sim = {});

/// One supervised example: rendered model inputs at a chunk boundary and the
/// action chunk the expert executed there.
struct LoadedSample {
  model::ModelInputs inputs;
  Eigen::MatrixXd target;  ///< horizon x d_a
};

/// Renders inputs for every chunk of every episode in the dataset, under the
/// given encoder settings. `crop_from_hd` selects the crop source frame just
/// as it does at inference time.
std::vector<LoadedSample> load_training_set(const std::string& dataset_dir,
                                            const model::EncoderConfig& enc, int d_s,
                                            bool crop_from_hd = true,
                                            const sim2d::SimConfig& sim = {});

}  // namespace hivla::harness
