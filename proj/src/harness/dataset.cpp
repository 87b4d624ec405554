#include "hivla/harness/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hivla/core/array_io.hpp"
#include "hivla/core/errors.hpp"
#include "hivla/plan/oracle.hpp"
#include "hivla/runtime/runtime.hpp"
#include "hivla/sim2d/expert.hpp"
#include "hivla/sim2d/tasks.hpp"
#include "hivla/sim2d/world.hpp"

namespace hivla::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetConfig::validate() const {
  if (tasks.empty()) throw ConfigError("dataset: task list must be non-empty");
  if (episodes_per_task < 1) throw ConfigError("dataset: episodes_per_task must be >= 1");
  if (horizon < 1) throw ConfigError("dataset: horizon must be >= 1");
  if (max_steps < horizon) throw ConfigError("dataset: max_steps must be >= horizon");
  if (max_failure_rate < 0.0 || max_failure_rate > 1.0) {
    throw ConfigError("dataset: max_failure_rate must lie in [0, 1]");
  }
  if (out_dir.empty()) throw ConfigError("dataset: out_dir must be set");
  const auto names = sim2d::registered_task_names();
  for (const std::string& t : tasks) {
    if (std::find(names.begin(), names.end(), t) == names.end()) {
      throw ConfigError("dataset: unknown task '" + t + "'");
    }
  }
}

namespace {

/// Rolls out the privileged planner with the scripted expert, replanning at
/// every chunk boundary. Returns false for episodes that miss the step
/// budget, hit an expert error, or end unsuccessfully.
bool roll_episode(const std::string& task_name, std::uint64_t seed, int horizon, int max_steps,
                  const sim2d::SimConfig& sim, EpisodeRecord& out) {
  const sim2d::TaskSpec task = sim2d::make_task(task_name, seed);
  sim2d::SceneState state = sim2d::reset(task, seed, sim);

  out = EpisodeRecord{};
  out.task_name = task_name;
  out.seed = seed;
  out.horizon = horizon;
  out.d_a = sim.action.d_a;

  std::vector<Eigen::VectorXd> rows;
  while (true) {
    const plan::StructuredPlan plan = plan::oracle_plan(state, sim);
    if (plan.action_type == plan::ActionType::done) {
      out.success = sim2d::check_success(state, sim);
      break;
    }
    if (static_cast<int>(rows.size()) + horizon > max_steps) return false;

    sim2d::ActionChunk chunk;
    try {
      chunk = sim2d::expert_chunk(state, plan, horizon, sim);
    } catch (const RuntimeError&) {
      return false;
    } catch (const ConfigError&) {
      return false;
    }
    out.chunks.push_back({static_cast<int>(rows.size()), plan});
    for (Eigen::Index i = 0; i < chunk.rows(); ++i) {
      const Eigen::VectorXd a = chunk.row(i).transpose();
      state = sim2d::step(state, a, sim);
      rows.push_back(a);
    }
  }
  if (!out.success) return false;

  out.steps = static_cast<int>(rows.size());
  out.actions.resize(out.steps, out.d_a);
  for (int i = 0; i < out.steps; ++i) out.actions.row(i) = rows[static_cast<std::size_t>(i)];
  return true;
}

json bbox_to_json(const plan::NormalizedBox& b) {
  return json::array({b.ymin, b.xmin, b.ymax, b.xmax});
}

void write_episode(const fs::path& dir, const EpisodeRecord& ep) {
  fs::create_directories(dir);

  json meta;
  meta["task"] = ep.task_name;
  meta["seed"] = ep.seed;
  meta["horizon"] = ep.horizon;
  meta["d_a"] = ep.d_a;
  meta["steps"] = ep.steps;
  meta["success"] = ep.success;
  meta["actions_file"] = "actions.bin";

  json chunks = json::array();
  for (const ChunkRecord& c : ep.chunks) {
    chunks.push_back(json{{"step", c.step}, {"plan", plan::serialize_plan(c.plan)}});
  }
  meta["chunks"] = std::move(chunks);

  // Dense per-step annotation: every executed step labelled with the subtask
  // it served.
  json per_step = json::array();
  for (std::size_t ci = 0; ci < ep.chunks.size(); ++ci) {
    const ChunkRecord& c = ep.chunks[ci];
    const int end = ci + 1 < ep.chunks.size() ? ep.chunks[ci + 1].step : ep.steps;
    for (int s = c.step; s < end; ++s) {
      per_step.push_back(json{{"subtask", c.plan.next_subtask_description},
                              {"action_type", plan::action_type_name(c.plan.action_type)},
                              {"target", c.plan.target_object},
                              {"bbox", bbox_to_json(c.plan.bbox)}});
    }
  }
  meta["per_step"] = std::move(per_step);

  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  {
    std::vector<double> flat(static_cast<std::size_t>(ep.steps) * ep.d_a);
    for (int i = 0; i < ep.steps; ++i) {
      for (int j = 0; j < ep.d_a; ++j) {
        flat[static_cast<std::size_t>(i) * ep.d_a + j] = ep.actions(i, j);
      }
    }
    save_array((dir / "actions.bin").string(),
               Array::from_f64(flat, {static_cast<std::size_t>(ep.steps),
                                      static_cast<std::size_t>(ep.d_a)}));
  }
}

}  // namespace

DatasetSummary generate_dataset(const DatasetConfig& cfg, const sim2d::SimConfig& sim) {
  cfg.validate();
  sim.action.validate();

  DatasetSummary summary;
  summary.root = cfg.out_dir;
  summary.seed_base = cfg.seed;
  fs::create_directories(cfg.out_dir);

  // Attempts beyond the quota are bounded so a broken expert cannot spin
  // forever; the bound is far above the failure budget it is meant to trip.
  const int max_attempts =
      cfg.episodes_per_task + std::max(5, (cfg.episodes_per_task + 3) / 4);

  std::uint64_t max_attempts_used = 0;
  for (const std::string& task : cfg.tasks) {
    int kept = 0, attempts = 0, failures = 0;
    while (kept < cfg.episodes_per_task) {
      if (attempts >= max_attempts) {
        throw RuntimeError("dataset: task '" + task + "' produced only " + std::to_string(kept) +
                           "/" + std::to_string(cfg.episodes_per_task) + " episodes after " +
                           std::to_string(attempts) + " attempts (" + std::to_string(failures) +
                           " expert failures); the expert or simulator is broken");
      }
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(attempts);
      ++attempts;
      EpisodeRecord ep;
      if (!roll_episode(task, seed, cfg.horizon, cfg.max_steps, sim, ep)) {
        ++failures;
        continue;
      }
      char name[32];
      std::snprintf(name, sizeof(name), "ep_%05d", kept);
      const std::string rel = task + "/" + name;
      write_episode(fs::path(cfg.out_dir) / rel, ep);
      summary.episode_dirs.push_back(rel);
      ++kept;
    }
    const double rate = static_cast<double>(failures) / static_cast<double>(attempts);
    if (rate > cfg.max_failure_rate) {
      throw RuntimeError("dataset: task '" + task + "' expert failure rate " +
                         std::to_string(rate) + " exceeds the budget " +
                         std::to_string(cfg.max_failure_rate) +
                         "; the expert or simulator is broken");
    }
    summary.successes[task] = kept;
    summary.failures[task] = failures;
    max_attempts_used = std::max(max_attempts_used, static_cast<std::uint64_t>(attempts));
  }
  summary.seeds_used = max_attempts_used;

  json index;
  index["config"] = json{{"tasks", cfg.tasks},
                         {"episodes_per_task", cfg.episodes_per_task},
                         {"horizon", cfg.horizon},
                         {"max_steps", cfg.max_steps},
                         {"seed", cfg.seed},
                         {"max_failure_rate", cfg.max_failure_rate}};
  index["episodes"] = summary.episode_dirs;
  index["successes"] = summary.successes;
  index["failures"] = summary.failures;
  index["seed_base"] = summary.seed_base;
  index["seeds_used"] = summary.seeds_used;

  summary.index_path = (fs::path(cfg.out_dir) / "index.json").string();
  std::ofstream out(summary.index_path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + summary.index_path);
  out << index.dump(2) << '\n';
  return summary;
}

DatasetSummary read_index(const std::string& dataset_dir) {
  const fs::path path = fs::path(dataset_dir) / "index.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("dataset index not found: " + path.string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw ConfigError("dataset index unreadable: " + std::string(e.what()));
  }

  DatasetSummary summary;
  summary.root = dataset_dir;
  summary.index_path = path.string();
  summary.episode_dirs = index.at("episodes").get<std::vector<std::string>>();
  summary.successes = index.at("successes").get<std::map<std::string, int>>();
  summary.failures = index.at("failures").get<std::map<std::string, int>>();
  summary.seed_base = index.at("seed_base").get<std::uint64_t>();
  summary.seeds_used = index.at("seeds_used").get<std::uint64_t>();
  return summary;
}

EpisodeRecord load_episode(const std::string& episode_dir) {
  const fs::path dir(episode_dir);
  std::ifstream in(dir / "meta.json", std::ios::binary);
  if (!in) throw ConfigError("episode meta not found in " + episode_dir);
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw ConfigError("episode meta unreadable: " + std::string(e.what()));
  }

  EpisodeRecord ep;
  ep.dir = episode_dir;
  ep.task_name = meta.at("task").get<std::string>();
  ep.seed = meta.at("seed").get<std::uint64_t>();
  ep.horizon = meta.at("horizon").get<int>();
  ep.d_a = meta.at("d_a").get<int>();
  ep.steps = meta.at("steps").get<int>();
  ep.success = meta.at("success").get<bool>();

  for (const json& c : meta.at("chunks")) {
    const plan::PlanParseResult parsed = plan::parse_plan(c.at("plan").get<std::string>());
    if (!parsed.ok()) {
      throw ConfigError("episode " + episode_dir +
                        " holds an invalid plan: " + plan::plan_error_name(parsed.error));
    }
    ep.chunks.push_back({c.at("step").get<int>(), parsed.plan});
  }

  const Array arr = load_array((dir / meta.at("actions_file").get<std::string>()).string());
  if (arr.dims.size() != 2 || static_cast<int>(arr.dims[0]) != ep.steps ||
      static_cast<int>(arr.dims[1]) != ep.d_a) {
    throw ConfigError("episode " + episode_dir + " action array shape mismatch");
  }
  const std::vector<double> flat = arr.as_f64();
  ep.actions.resize(ep.steps, ep.d_a);
  for (int i = 0; i < ep.steps; ++i) {
    for (int j = 0; j < ep.d_a; ++j) {
      ep.actions(i, j) = flat[static_cast<std::size_t>(i) * ep.d_a + j];
    }
  }
  return ep;
}

sim2d::SceneState replay_to_chunk(const EpisodeRecord& ep, std::size_t chunk_index,
                                  const sim2d::SimConfig& sim) {
  if (chunk_index >= ep.chunks.size()) throw ConfigError("replay_to_chunk: index out of range");
  const sim2d::TaskSpec task = sim2d::make_task(ep.task_name, ep.seed);
  sim2d::SceneState state = sim2d::reset(task, ep.seed, sim);
  const int until = ep.chunks[chunk_index].step;
  for (int s = 0; s < until; ++s) {
    state = sim2d::step(state, ep.actions.row(s).transpose(), sim);
  }
  return state;
}

std::vector<LoadedSample> load_training_set(const std::string& dataset_dir,
                                            const model::EncoderConfig& enc, int d_s,
                                            bool crop_from_hd, const sim2d::SimConfig& sim) {
  const DatasetSummary summary = read_index(dataset_dir);
  std::vector<LoadedSample> samples;
  for (const std::string& rel : summary.episode_dirs) {
    const EpisodeRecord ep = load_episode((fs::path(dataset_dir) / rel).string());
    const sim2d::TaskSpec task = sim2d::make_task(ep.task_name, ep.seed);
    sim2d::SceneState state = sim2d::reset(task, ep.seed, sim);
    std::size_t next = 0;
    for (int s = 0; s <= ep.steps && next < ep.chunks.size(); ++s) {
      if (ep.chunks[next].step == s) {
        if (s + ep.horizon > ep.steps) {
          throw ConfigError("episode " + ep.dir + " chunk at step " + std::to_string(s) +
                            " runs past the recorded actions");
        }
        LoadedSample sample;
        sample.inputs =
            runtime::observe(state, ep.chunks[next].plan, enc, d_s, crop_from_hd, sim);
        sample.target = ep.actions.middleRows(s, ep.horizon);
        samples.push_back(std::move(sample));
        ++next;
      }
      if (s < ep.steps) state = sim2d::step(state, ep.actions.row(s).transpose(), sim);
    }
    if (next != ep.chunks.size()) {
      throw ConfigError("episode " + ep.dir + " has chunk offsets past its action array");
    }
  }
  if (samples.empty()) throw ConfigError("dataset " + dataset_dir + " yielded no samples");
  return samples;
}

}  // namespace hivla::harness
