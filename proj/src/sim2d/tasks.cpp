#include "hivla/sim2d/tasks.hpp"

#include <algorithm>
#include <array>

#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"

namespace hivla::sim2d {

const char* color_name(ObjColor c) {
  switch (c) {
    case ObjColor::red: return "red";
    case ObjColor::green: return "green";
    case ObjColor::blue: return "blue";
    case ObjColor::yellow: return "yellow";
  }
  return "?";
}

Eigen::Vector3f color_rgb(ObjColor c) {
  switch (c) {
    case ObjColor::red: return {0.85f, 0.15f, 0.12f};
    case ObjColor::green: return {0.10f, 0.62f, 0.20f};
    case ObjColor::blue: return {0.15f, 0.30f, 0.85f};
    case ObjColor::yellow: return {0.90f, 0.80f, 0.10f};
  }
  return {0.f, 0.f, 0.f};
}

namespace {

constexpr std::array<ObjColor, 4> kPalette = {ObjColor::red, ObjColor::green, ObjColor::blue,
                                              ObjColor::yellow};

std::vector<ObjColor> draw_distinct_colors(int n, Rng& rng) {
  std::array<int, 4> idx = {0, 1, 2, 3};
  for (int i = 3; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<ObjColor> out;
  for (int i = 0; i < n; ++i) out.push_back(kPalette[static_cast<std::size_t>(idx[i])]);
  return out;
}

std::string slot_word(int slot, int k) {
  if (k == 2) return slot == 0 ? "left" : "right";
  if (slot == 0) return "left";
  if (slot == k - 1) return "right";
  return "middle";
}

struct ParsedName {
  TaskFamily family;
  int k;
  TaskVariant variant;
};

ParsedName parse_task_name(const std::string& name) {
  std::string base = name;
  TaskVariant variant = TaskVariant::color;
  const std::string spatial_suffix = "_spatial";
  if (base.size() > spatial_suffix.size() &&
      base.compare(base.size() - spatial_suffix.size(), spatial_suffix.size(), spatial_suffix) == 0) {
    variant = TaskVariant::spatial;
    base = base.substr(0, base.size() - spatial_suffix.size());
  }

  auto tail_int = [&base](const std::string& prefix) -> int {
    return std::stoi(base.substr(prefix.size()));
  };
  try {
    if (base == "click_single") return {TaskFamily::click_single, 1, variant};
    if (base == "pick_place_single") return {TaskFamily::pick_place_single, 1, variant};
    if (base.starts_with("click_among_")) return {TaskFamily::click_among_k, tail_int("click_among_"), variant};
    if (base.starts_with("pick_place_among_")) {
      return {TaskFamily::pick_place_among_k, tail_int("pick_place_among_"), variant};
    }
    if (base.starts_with("stack_")) return {TaskFamily::stack_k, tail_int("stack_"), variant};
  } catch (const std::exception&) {
    throw ConfigError("malformed task name: " + name);
  }
  throw ConfigError("unknown task name: " + name);
}

}  // namespace

std::vector<std::string> registered_task_names() {
  return {"click_single",       "click_among_2",         "click_among_3",
          "click_among_2_spatial", "click_among_3_spatial", "pick_place_single",
          "pick_place_among_2", "pick_place_among_3",    "stack_2",
          "stack_3"};
}

TaskSpec make_task(const std::string& name, std::uint64_t seed) {
  const ParsedName parsed = parse_task_name(name);
  Rng rng(derive_seed(seed, "sim2d.task"));

  TaskSpec task;
  task.name = name;
  task.family = parsed.family;
  task.k = parsed.k;
  task.variant = parsed.variant;

  switch (parsed.family) {
    case TaskFamily::click_single: {
      task.colors = draw_distinct_colors(1, rng);
      task.instruction = "click the bell";
      task.target_ids = {0};
      break;
    }
    case TaskFamily::click_among_k: {
      if (task.k < 2 || task.k > 4) throw ConfigError("click_among_k requires k in [2, 4]");
      if (task.variant == TaskVariant::color) {
        task.colors = draw_distinct_colors(task.k, rng);
        const int t = static_cast<int>(rng.uniform_int(0, task.k - 1));
        task.instruction = std::string("click the ") + color_name(task.colors[t]) + " bell";
        task.target_ids = {t};
      } else {
        if (task.k > 3) throw ConfigError("spatial click variant requires k in [2, 3]");
        const ObjColor c = draw_distinct_colors(1, rng)[0];
        task.colors.assign(static_cast<std::size_t>(task.k), c);
        task.spatial_slot = static_cast<int>(rng.uniform_int(0, task.k - 1));
        task.instruction = "click the " + slot_word(task.spatial_slot, task.k) + " bell";
      }
      break;
    }
    case TaskFamily::pick_place_single:
    case TaskFamily::pick_place_among_k: {
      if (task.k < 1 || task.k > 3) throw ConfigError("pick_place requires k in [1, 3]");
      std::vector<ObjColor> colors = draw_distinct_colors(task.k + 1, rng);
      task.colors = colors;
      const int t = task.k == 1 ? 0 : static_cast<int>(rng.uniform_int(0, task.k - 1));
      task.instruction = std::string("pick up the ") + color_name(colors[static_cast<std::size_t>(t)]) +
                         " block and place it on the " +
                         color_name(colors[static_cast<std::size_t>(task.k)]) + " mat";
      task.target_ids = {t};
      task.destination_id = task.k;
      break;
    }
    case TaskFamily::stack_k: {
      if (task.k < 2 || task.k > 4) throw ConfigError("stack_k requires k in [2, 4]");
      task.colors = draw_distinct_colors(task.k, rng);
      std::string text = "move the blocks to the center of the table and stack";
      for (int i = task.k - 1; i >= 1; --i) {
        if (i < task.k - 1) text += " and";
        text += std::string(" the ") + color_name(task.colors[static_cast<std::size_t>(i)]) +
                " block on the " + color_name(task.colors[static_cast<std::size_t>(i - 1)]) + " block";
      }
      task.instruction = text;
      for (int i = 0; i < task.k; ++i) task.target_ids.push_back(i);
      task.destination_point = Eigen::Vector2d(0.5, 0.5);
      break;
    }
  }
  return task;
}

}  // namespace hivla::sim2d
