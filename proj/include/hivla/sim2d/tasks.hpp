#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hivla/sim2d/types.hpp"

namespace hivla::sim2d {

/// Registered task names: click_single, click_among_2, click_among_3,
/// click_among_2_spatial, click_among_3_spatial, pick_place_single,
/// pick_place_among_2, pick_place_among_3, stack_2, stack_3.
std::vector<std::string> registered_task_names();

/// Draws the episode-level task specification (object colors, chosen target,
/// instruction wording) for a registered task name. Deterministic in
/// (name, seed). Throws ConfigError for unknown names or invalid k.
TaskSpec make_task(const std::string& name, std::uint64_t seed);

}  // namespace hivla::sim2d
