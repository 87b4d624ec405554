#include "hivla/harness/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "hivla/core/errors.hpp"
#include "hivla/harness/stats.hpp"
#include "hivla/model/checkpoint.hpp"
#include "hivla/plan/metrics.hpp"
#include "hivla/sim2d/tasks.hpp"

namespace hivla::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void EvalProtocol::validate() const {
  rcfg.validate();
  if (trials < 1) throw ConfigError("eval: trials must be >= 1");
  if (threads < 0) throw ConfigError("eval: threads must be >= 0");
  assert_disjoint_seed_ranges(train_seed_base, train_seed_count, seed_base,
                              static_cast<std::uint64_t>(trials));
}

// ---- table emission ------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string table_to_csv(const ResultTable& table) {
  // Scalar extras become extra columns so the human-readable file carries
  // everything one-dimensional; arrays and objects stay JSON-only.
  std::set<std::string> extra_cols;
  for (const TableRow& r : table.rows) {
    for (const auto& [k, v] : r.extra.items()) {
      if (v.is_number() || v.is_string() || v.is_boolean()) extra_cols.insert(k);
    }
  }

  std::string out = "key,successes,trials,rate,lo95,hi95";
  for (const std::string& c : extra_cols) out += "," + csv_escape(c);
  out += '\n';
  for (const TableRow& r : table.rows) {
    out += csv_escape(r.key) + "," + std::to_string(r.successes) + "," +
           std::to_string(r.trials) + "," + fmt(r.rate) + "," + fmt(r.lo) + "," + fmt(r.hi);
    for (const std::string& c : extra_cols) {
      out += ",";
      if (!r.extra.contains(c)) continue;
      const json& v = r.extra.at(c);
      if (v.is_string()) {
        out += csv_escape(v.get<std::string>());
      } else if (v.is_number() || v.is_boolean()) {
        out += v.dump();
      }
    }
    out += '\n';
  }
  return out;
}

json table_to_json(const ResultTable& table) {
  json rows = json::array();
  for (const TableRow& r : table.rows) {
    rows.push_back(json{{"key", r.key},
                        {"successes", r.successes},
                        {"trials", r.trials},
                        {"rate", r.rate},
                        {"lo95", r.lo},
                        {"hi95", r.hi},
                        {"extra", r.extra}});
  }
  return json{{"name", table.name}, {"meta", table.meta}, {"rows", rows}};
}

void write_table(const ResultTable& table, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / (table.name + ".csv"), std::ios::binary);
    if (!out) throw RuntimeError("cannot write table CSV in " + dir);
    out << table_to_csv(table);
  }
  {
    std::ofstream out(fs::path(dir) / (table.name + ".json"), std::ios::binary);
    if (!out) throw RuntimeError("cannot write table JSON in " + dir);
    out << table_to_json(table).dump(2) << '\n';
  }
}

// ---- policy factories ----------------------------------------------------------

PolicyFactory dit_policy_factory(const std::string& checkpoint_path, bool crop_from_hd,
                                 const sim2d::SimConfig& sim) {
  auto ck = std::make_shared<model::CheckpointData<float>>(
      model::load_checkpoint<float>(checkpoint_path));
  return [ck, crop_from_hd, sim]() -> std::unique_ptr<runtime::Policy> {
    return std::make_unique<runtime::DiTPolicy>(*ck, sim, crop_from_hd);
  };
}

PolicyFactory scripted_policy_factory(int horizon, const sim2d::SimConfig& sim) {
  return [horizon, sim]() -> std::unique_ptr<runtime::Policy> {
    return std::make_unique<runtime::ScriptedExpertPolicy>(horizon, sim);
  };
}

PolicyFactory random_policy_factory(int horizon, const sim2d::SimConfig& sim) {
  return [horizon, sim]() -> std::unique_ptr<runtime::Policy> {
    return std::make_unique<runtime::RandomPolicy>(horizon, sim);
  };
}

// ---- parallel episode map ------------------------------------------------------

namespace {

struct Job {
  std::string task;
  std::uint64_t seed = 0;
  runtime::RuntimeConfig rcfg;
};

/// Runs every job, fanned out across threads, with results placed by index
/// so the outcome is independent of the thread count.
std::vector<runtime::EpisodeResult> run_jobs(const std::vector<Job>& jobs,
                                             const PolicyFactory& make_policy, int threads,
                                             const sim2d::SimConfig& sim) {
  const int n = static_cast<int>(jobs.size());
  const int want = threads > 0 ? threads
                               : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int nt = std::max(1, std::min(want, n));

  std::vector<runtime::EpisodeResult> results(jobs.size());
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&](int wid) {
    try {
      runtime::OraclePlanner planner(sim);
      std::unique_ptr<runtime::Policy> policy = make_policy();
      for (int i = wid; i < n; i += nt) {
        const Job& job = jobs[static_cast<std::size_t>(i)];
        const sim2d::TaskSpec task = sim2d::make_task(job.task, job.seed);
        results[static_cast<std::size_t>(i)] =
            runtime::run_episode(task, planner, *policy, job.rcfg, job.seed, nullptr, sim);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };

  if (nt == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    for (int w = 0; w < nt; ++w) pool.emplace_back(worker, w);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

TableRow make_row(const std::string& key, int successes, int trials) {
  TableRow row;
  row.key = key;
  row.successes = successes;
  row.trials = trials;
  row.rate = trials > 0 ? static_cast<double>(successes) / trials : 0.0;
  const Interval ci = wilson95(successes, trials);
  row.lo = ci.lo;
  row.hi = ci.hi;
  return row;
}

json outcome_bits(const std::vector<runtime::EpisodeResult>& results, int begin, int count) {
  json bits = json::array();
  for (int i = 0; i < count; ++i) {
    bits.push_back(results[static_cast<std::size_t>(begin + i)].success ? 1 : 0);
  }
  return bits;
}

}  // namespace

// ---- suites --------------------------------------------------------------------

ResultTable eval_success(const std::vector<std::string>& tasks, const PolicyFactory& make_policy,
                         const EvalProtocol& proto, const sim2d::SimConfig& sim) {
  proto.validate();
  if (tasks.empty()) throw ConfigError("eval: task list must be non-empty");

  std::vector<Job> jobs;
  jobs.reserve(tasks.size() * static_cast<std::size_t>(proto.trials));
  for (const std::string& task : tasks) {
    for (int i = 0; i < proto.trials; ++i) {
      jobs.push_back({task, proto.seed_base + static_cast<std::uint64_t>(i), proto.rcfg});
    }
  }
  const auto results = run_jobs(jobs, make_policy, proto.threads, sim);

  ResultTable table;
  table.name = "success";
  table.meta["trials_per_task"] = proto.trials;
  table.meta["seed_base"] = proto.seed_base;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const int begin = static_cast<int>(ti) * proto.trials;
    int ok = 0;
    double mean_steps = 0.0;
    for (int i = 0; i < proto.trials; ++i) {
      const auto& r = results[static_cast<std::size_t>(begin + i)];
      ok += r.success ? 1 : 0;
      mean_steps += r.steps;
    }
    TableRow row = make_row(tasks[ti], ok, proto.trials);
    row.extra["outcomes"] = outcome_bits(results, begin, proto.trials);
    row.extra["mean_steps"] = mean_steps / proto.trials;
    table.rows.push_back(std::move(row));
  }
  return table;
}

ResultTable eval_robustness(const std::vector<std::string>& tasks,
                            const PolicyFactory& make_policy, const std::vector<double>& rates,
                            const EvalProtocol& proto, const sim2d::SimConfig& sim) {
  proto.validate();
  if (tasks.empty()) throw ConfigError("eval: task list must be non-empty");
  if (rates.empty()) throw ConfigError("eval: rate grid must be non-empty");
  for (const double r : rates) {
    if (r < 0.0 || r > 1.0) throw ConfigError("eval: corruption rates must lie in [0, 1]");
  }

  ResultTable table;
  table.name = "robustness";
  table.meta["trials_per_cell"] = proto.trials * static_cast<int>(tasks.size());
  table.meta["seed_base"] = proto.seed_base;
  table.meta["rates"] = rates;

  const std::vector<std::string> channels = {"bbox", "lang", "both"};
  for (const std::string& channel : channels) {
    for (const double rate : rates) {
      runtime::RuntimeConfig rcfg = proto.rcfg;
      rcfg.bbox_rate = channel != "lang" ? rate : 0.0;
      rcfg.lang_rate = channel != "bbox" ? rate : 0.0;

      std::vector<Job> jobs;
      for (const std::string& task : tasks) {
        for (int i = 0; i < proto.trials; ++i) {
          jobs.push_back({task, proto.seed_base + static_cast<std::uint64_t>(i), rcfg});
        }
      }
      const auto results = run_jobs(jobs, make_policy, proto.threads, sim);

      int ok = 0;
      json per_task = json::object();
      for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        int task_ok = 0;
        for (int i = 0; i < proto.trials; ++i) {
          task_ok += results[ti * proto.trials + static_cast<std::size_t>(i)].success ? 1 : 0;
        }
        per_task[tasks[ti]] = task_ok;
        ok += task_ok;
      }
      char key[64];
      std::snprintf(key, sizeof(key), "%s@%.2f", channel.c_str(), rate);
      TableRow row = make_row(key, ok, static_cast<int>(jobs.size()));
      row.extra["channel"] = channel;
      row.extra["corruption_rate"] = rate;
      row.extra["per_task"] = per_task;
      row.extra["outcomes"] = outcome_bits(results, 0, static_cast<int>(results.size()));
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

const std::vector<AblationSpec>& ablation_grid() {
  using model::Stream;
  static const std::vector<AblationSpec> grid = {
      {"Local->Text", {Stream::local, Stream::lang}, true, true},
      {"Global->Text", {Stream::global, Stream::lang}, true, true},
      {"Local->Text->Global", {Stream::local, Stream::lang, Stream::global}, true, true},
      {"Global->Text->Local", {Stream::global, Stream::lang, Stream::local}, true, true},
      {"Local->Global->Text", {Stream::local, Stream::global, Stream::lang}, true, true},
      {"Global->Local->Text", {Stream::global, Stream::local, Stream::lang}, true, true},
      {"w/o HD Crop", {Stream::global, Stream::local, Stream::lang}, false, true},
      {"w/o Abs PE", {Stream::global, Stream::local, Stream::lang}, true, false},
      {"Full", {Stream::global, Stream::local, Stream::lang}, true, true},
  };
  return grid;
}

ResultTable eval_ablation(const std::vector<std::string>& tasks,
                          const std::vector<AblationVariant>& variants,
                          const EvalProtocol& proto, const sim2d::SimConfig& sim) {
  proto.validate();
  if (tasks.empty()) throw ConfigError("eval: task list must be non-empty");
  if (variants.empty()) throw ConfigError("eval: variant list must be non-empty");

  ResultTable table;
  table.name = "ablation";
  table.meta["tasks"] = tasks;
  table.meta["trials_per_task"] = proto.trials;
  table.meta["seed_base"] = proto.seed_base;

  std::vector<std::vector<int>> all_outcomes;
  for (const AblationVariant& variant : variants) {
    const PolicyFactory factory =
        dit_policy_factory(variant.checkpoint_path, variant.crop_from_hd, sim);

    std::vector<Job> jobs;
    for (const std::string& task : tasks) {
      for (int i = 0; i < proto.trials; ++i) {
        jobs.push_back({task, proto.seed_base + static_cast<std::uint64_t>(i), proto.rcfg});
      }
    }
    const auto results = run_jobs(jobs, factory, proto.threads, sim);

    std::vector<int> outcomes(results.size());
    int ok = 0;
    json per_task = json::object();
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      int task_ok = 0;
      for (int i = 0; i < proto.trials; ++i) {
        const std::size_t idx = ti * proto.trials + static_cast<std::size_t>(i);
        outcomes[idx] = results[idx].success ? 1 : 0;
        task_ok += outcomes[idx];
      }
      per_task[tasks[ti]] = task_ok;
      ok += task_ok;
    }
    TableRow row = make_row(variant.label, ok, static_cast<int>(results.size()));
    row.extra["checkpoint"] = variant.checkpoint_path;
    row.extra["crop_from_hd"] = variant.crop_from_hd;
    row.extra["per_task"] = per_task;
    row.extra["outcomes"] = outcomes;
    table.rows.push_back(std::move(row));
    all_outcomes.push_back(std::move(outcomes));
  }

  // Paired comparison against the full model, when present.
  const auto full_it = std::find_if(variants.begin(), variants.end(),
                                    [](const AblationVariant& v) { return v.label == "Full"; });
  if (full_it != variants.end()) {
    const std::size_t full_idx = static_cast<std::size_t>(full_it - variants.begin());
    const std::vector<int>& full = all_outcomes[full_idx];
    for (std::size_t vi = 0; vi < table.rows.size(); ++vi) {
      if (vi == full_idx) continue;
      int variant_wins = 0, full_wins = 0;
      for (std::size_t i = 0; i < full.size(); ++i) {
        if (all_outcomes[vi][i] == 1 && full[i] == 0) ++variant_wins;
        if (all_outcomes[vi][i] == 0 && full[i] == 1) ++full_wins;
      }
      table.rows[vi].extra["p_vs_full"] = paired_sign_test_p(variant_wins, full_wins);
      table.rows[vi].extra["wins_vs_full"] = variant_wins;
      table.rows[vi].extra["losses_vs_full"] = full_wins;
    }
  }
  return table;
}

ResultTable eval_planner(const std::vector<std::string>& tasks, const EvalProtocol& proto,
                         const sim2d::SimConfig& sim) {
  proto.validate();
  if (tasks.empty()) throw ConfigError("eval: task list must be non-empty");

  std::vector<Job> jobs;
  for (const std::string& task : tasks) {
    for (int i = 0; i < proto.trials; ++i) {
      jobs.push_back({task, proto.seed_base + static_cast<std::uint64_t>(i), proto.rcfg});
    }
  }
  // The policy horizon matches the runtime default chunk length used across
  // the training pipeline.
  const auto results = run_jobs(jobs, scripted_policy_factory(16, sim), proto.threads, sim);

  ResultTable table;
  table.name = "planner";
  table.meta["trials_per_task"] = proto.trials;
  table.meta["seed_base"] = proto.seed_base;
  table.meta["bbox_rate"] = proto.rcfg.bbox_rate;
  table.meta["lang_rate"] = proto.rcfg.lang_rate;

  std::vector<plan::NormalizedBox> all_pred, all_gt;
  std::vector<plan::StructuredPlan> all_exec, all_prop;
  int all_ok = 0;

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    std::vector<plan::NormalizedBox> pred, gt;
    std::vector<plan::StructuredPlan> exec, prop;
    int ok = 0;
    for (int i = 0; i < proto.trials; ++i) {
      const auto& r = results[ti * proto.trials + static_cast<std::size_t>(i)];
      ok += r.success ? 1 : 0;
      for (std::size_t k = 0; k < r.executed_plans.size(); ++k) {
        pred.push_back(r.executed_plans[k].bbox);
        gt.push_back(r.proposed_plans[k].bbox);
        exec.push_back(r.executed_plans[k]);
        prop.push_back(r.proposed_plans[k]);
      }
    }
    TableRow row = make_row(tasks[ti], ok, proto.trials);
    row.extra["miou"] = pred.empty() ? 1.0 : plan::miou(pred, gt);
    row.extra["exact_match"] = exec.empty() ? 1.0 : plan::exact_match(exec, prop);
    row.extra["plans"] = static_cast<int>(pred.size());
    table.rows.push_back(std::move(row));

    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_gt.insert(all_gt.end(), gt.begin(), gt.end());
    all_exec.insert(all_exec.end(), exec.begin(), exec.end());
    all_prop.insert(all_prop.end(), prop.begin(), prop.end());
    all_ok += ok;
  }

  TableRow pooled = make_row("all", all_ok, static_cast<int>(jobs.size()));
  pooled.extra["miou"] = all_pred.empty() ? 1.0 : plan::miou(all_pred, all_gt);
  pooled.extra["exact_match"] = all_exec.empty() ? 1.0 : plan::exact_match(all_exec, all_prop);
  pooled.extra["plans"] = static_cast<int>(all_pred.size());
  table.rows.push_back(std::move(pooled));
  return table;
}

}  // namespace hivla::harness
