#include "hivla/plan/corrupt.hpp"

#include <algorithm>

#include "hivla/core/errors.hpp"

namespace hivla::plan {

StructuredPlan corrupt_bbox(const StructuredPlan& plan, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("corruption rate must lie in [0, 1]");
  if (!plan.bbox.valid()) throw ConfigError("corrupt_bbox requires a valid bbox");
  if (!rng.bernoulli(rate)) return plan;

  const NormalizedBox& b = plan.bbox;
  const int w = b.xmax - b.xmin;
  const int h = b.ymax - b.ymin;
  int dx = rng.bernoulli(0.5) ? w : -w;
  int dy = rng.bernoulli(0.5) ? h : -h;
  dx = std::clamp(dx, -b.xmin, 1000 - b.xmax);
  dy = std::clamp(dy, -b.ymin, 1000 - b.ymax);

  StructuredPlan out = plan;
  out.bbox = NormalizedBox{b.ymin + dy, b.xmin + dx, b.ymax + dy, b.xmax + dx};
  return out;
}

StructuredPlan corrupt_language(const StructuredPlan& plan, double rate, Rng& rng,
                                std::span<const SubtaskEntry> vocabulary) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("corruption rate must lie in [0, 1]");
  std::vector<const SubtaskEntry*> distinct;
  for (const SubtaskEntry& e : vocabulary) {
    const bool seen = std::any_of(distinct.begin(), distinct.end(),
                                  [&e](const SubtaskEntry* d) { return *d == e; });
    if (!seen) distinct.push_back(&e);
  }
  if (distinct.size() < 2) {
    throw ConfigError("language corruption needs a vocabulary of at least two distinct subtasks");
  }
  if (!rng.bernoulli(rate)) return plan;

  std::vector<const SubtaskEntry*> candidates;
  for (const SubtaskEntry* e : distinct) {
    if (e->action_type != plan.action_type || e->target_object != plan.target_object ||
        e->description != plan.next_subtask_description) {
      candidates.push_back(e);
    }
  }
  if (candidates.empty()) {
    throw ConfigError("no alternative subtask available for language corruption");
  }
  const auto idx = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1));
  StructuredPlan out = plan;
  out.next_subtask_description = candidates[idx]->description;
  out.action_type = candidates[idx]->action_type;
  out.target_object = candidates[idx]->target_object;
  return out;
}

}  // namespace hivla::plan
