#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "hivla/model/config.hpp"
#include "hivla/runtime/runtime.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::harness {

/// One table cell: a success count with its trial count and 95% interval.
/// `extra` carries suite-specific fields (per-seed outcomes, p-values, ...).
struct TableRow {
  std::string key;
  int successes = 0;
  int trials = 0;
  double rate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

struct ResultTable {
  std::string name;
  std::vector<TableRow> rows;
  nlohmann::json meta = nlohmann::json::object();
};

std::string table_to_csv(const ResultTable& table);
nlohmann::json table_to_json(const ResultTable& table);

/// Writes dir/<name>.csv and dir/<name>.json.
void write_table(const ResultTable& table, const std::string& dir);

/// Fresh policy instance per evaluation worker; policies hold per-episode
/// state, so workers never share one.
using PolicyFactory = std::function<std::unique_ptr<runtime::Policy>()>;

PolicyFactory dit_policy_factory(const std::string& checkpoint_path, bool crop_from_hd = true,
                                 const sim2d::SimConfig& sim = {});
PolicyFactory scripted_policy_factory(int horizon, const sim2d::SimConfig& sim = {});
PolicyFactory random_policy_factory(int horizon, const sim2d::SimConfig& sim = {});

struct EvalProtocol {
  runtime::RuntimeConfig rcfg;
  int trials = 50;
  std::uint64_t seed_base = 10'000'000;  ///< trial i runs on seed_base + i
  int threads = 0;                       ///< 0 = hardware concurrency
  /// When count > 0, the protocol refuses eval seeds overlapping this range.
  std::uint64_t train_seed_base = 0;
  std::uint64_t train_seed_count = 0;

  void validate() const;
};

/// Success table over fresh-seed episodes, one row per task. Trials share
/// seeds across tasks (and across calls with one protocol), so different
/// policies are paired. Each row's extra holds the per-seed outcome bits.
ResultTable eval_success(const std::vector<std::string>& tasks, const PolicyFactory& make_policy,
                         const EvalProtocol& proto, const sim2d::SimConfig& sim = {});

/// Corruption sweep: for each channel in {bbox, lang, both} and each rate,
/// one row keyed "<channel>@<rate>". All cells share seeds, so the rate-0
/// rows coincide with eval_success on the same protocol.
ResultTable eval_robustness(const std::vector<std::string>& tasks,
                            const PolicyFactory& make_policy, const std::vector<double>& rates,
                            const EvalProtocol& proto, const sim2d::SimConfig& sim = {});

/// One trained model variant to place in the ablation table.
struct AblationVariant {
  std::string label;
  std::string checkpoint_path;
  bool crop_from_hd = true;
};

/// How one canonical variant differs from the base model configuration.
struct AblationSpec {
  std::string label;
  std::vector<model::Stream> ordering;
  bool crop_from_hd = true;
  bool use_abs_pe = true;
};

/// The canonical nine-variant grid: six conditioning orders (two- and
/// three-stream cascades), the two component knockouts, and the full model.
const std::vector<AblationSpec>& ablation_grid();

/// Evaluates every variant on the same tasks and seeds; one row per variant,
/// per-task counts in extra. When a "Full" variant is present, every other
/// row also carries the one-sided paired sign-test p-value against it.
ResultTable eval_ablation(const std::vector<std::string>& tasks,
                          const std::vector<AblationVariant>& variants,
                          const EvalProtocol& proto, const sim2d::SimConfig& sim = {});

/// Plan-fidelity metrics: episodes run under the privileged planner and
/// scripted expert at the protocol's corruption rates, scoring what the
/// policy was given against what the planner proposed. One row per task plus
/// a pooled "all" row; extra holds miou / exact_match / plan pair counts.
/// With zero corruption both metrics are exactly 1.
ResultTable eval_planner(const std::vector<std::string>& tasks, const EvalProtocol& proto,
                         const sim2d::SimConfig& sim = {});

}  // namespace hivla::harness
