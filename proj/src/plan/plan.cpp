#include "hivla/plan/plan.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <json.hpp>

#include "hivla/core/errors.hpp"

namespace hivla::plan {

using nlohmann::json;

const char* action_type_name(ActionType t) {
  switch (t) {
    case ActionType::pick: return "pick";
    case ActionType::place: return "place";
    case ActionType::click: return "click";
    case ActionType::done: return "done";
  }
  return "?";
}

const char* plan_error_name(PlanError e) {
  switch (e) {
    case PlanError::none: return "none";
    case PlanError::malformed_json: return "malformed_json";
    case PlanError::trailing_text: return "trailing_text";
    case PlanError::missing_key: return "missing_key";
    case PlanError::extra_key: return "extra_key";
    case PlanError::bad_field_type: return "bad_field_type";
    case PlanError::empty_description: return "empty_description";
    case PlanError::unknown_action_type: return "unknown_action_type";
    case PlanError::bbox_shape: return "bbox_shape";
    case PlanError::bbox_out_of_range: return "bbox_out_of_range";
    case PlanError::bbox_inverted: return "bbox_inverted";
  }
  return "?";
}

namespace {

constexpr std::array<const char*, 4> kKeys = {
    "next_subtask_description", "action_type", "target_object", "bbox"};

PlanParseResult fail(PlanError e, std::string detail) {
  PlanParseResult r;
  r.error = e;
  r.detail = std::move(detail);
  return r;
}

/// Finds the end of the first balanced JSON object in `text`, honoring string
/// literals and escapes. Returns npos when no complete object starts the text.
std::size_t object_prefix_end(const std::string& text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

bool parse_bbox_elements(const json& arr, NormalizedBox& box) {
  if (!arr.is_array() || arr.size() != 4) return false;
  std::array<int, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!arr[i].is_number_integer() || arr[i].is_boolean()) return false;
    const auto x = arr[i].get<std::int64_t>();
    if (x < -1000000 || x > 1000000) return false;
    v[i] = static_cast<int>(x);
  }
  box = NormalizedBox{v[0], v[1], v[2], v[3]};
  return true;
}

PlanParseResult validate_bbox(const json& field, StructuredPlan& plan) {
  NormalizedBox box;
  if (field.is_array()) {
    if (!parse_bbox_elements(field, box)) {
      return fail(PlanError::bbox_shape, "bbox must be four integers");
    }
  } else if (field.is_string()) {
    json arr = json::parse(field.get<std::string>(), nullptr, false);
    if (arr.is_discarded() || !parse_bbox_elements(arr, box)) {
      return fail(PlanError::bbox_shape, "bbox string must encode four integers");
    }
  } else {
    return fail(PlanError::bbox_shape, "bbox must be an array or a bracketed string");
  }

  const auto in_range = [](int v) { return 0 <= v && v <= 1000; };
  if (!in_range(box.ymin) || !in_range(box.xmin) || !in_range(box.ymax) || !in_range(box.xmax)) {
    return fail(PlanError::bbox_out_of_range, "bbox coordinates must lie in [0, 1000]");
  }
  if (box.ymin >= box.ymax || box.xmin >= box.xmax) {
    return fail(PlanError::bbox_inverted, "bbox must satisfy ymin < ymax and xmin < xmax");
  }
  plan.bbox = box;
  PlanParseResult ok_result;
  ok_result.plan = plan;
  return ok_result;
}

}  // namespace

PlanParseResult parse_plan(const std::string& text) {
  std::size_t start = 0;
  while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
  if (start == text.size() || text[start] != '{') {
    return fail(PlanError::malformed_json, "expected a JSON object");
  }
  const std::size_t end = object_prefix_end(text, start);
  if (end == std::string::npos) {
    return fail(PlanError::malformed_json, "unterminated JSON object");
  }
  for (std::size_t i = end; i < text.size(); ++i) {
    if (!std::isspace(static_cast<unsigned char>(text[i]))) {
      return fail(PlanError::trailing_text, "non-whitespace content after the plan object");
    }
  }

  const json obj = json::parse(text.substr(start, end - start), nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    return fail(PlanError::malformed_json, "plan is not valid JSON");
  }

  for (const char* key : kKeys) {
    if (!obj.contains(key)) return fail(PlanError::missing_key, std::string("missing key: ") + key);
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(kKeys.begin(), kKeys.end(),
                     [&key](const char* k) { return key == k; }) == kKeys.end()) {
      return fail(PlanError::extra_key, "unexpected key: " + key);
    }
  }

  StructuredPlan plan;
  const json& desc = obj["next_subtask_description"];
  const json& act = obj["action_type"];
  const json& target = obj["target_object"];
  if (!desc.is_string()) return fail(PlanError::bad_field_type, "next_subtask_description must be a string");
  if (!act.is_string()) return fail(PlanError::bad_field_type, "action_type must be a string");
  if (!target.is_string()) return fail(PlanError::bad_field_type, "target_object must be a string");

  plan.next_subtask_description = desc.get<std::string>();
  if (plan.next_subtask_description.empty()) {
    return fail(PlanError::empty_description, "next_subtask_description is empty");
  }
  const std::string act_name = act.get<std::string>();
  if (act_name == "pick") {
    plan.action_type = ActionType::pick;
  } else if (act_name == "place") {
    plan.action_type = ActionType::place;
  } else if (act_name == "click") {
    plan.action_type = ActionType::click;
  } else {
    return fail(PlanError::unknown_action_type, "unknown action_type: " + act_name);
  }
  plan.target_object = target.get<std::string>();

  return validate_bbox(obj["bbox"], plan);
}

std::string serialize_plan(const StructuredPlan& plan) {
  if (plan.action_type == ActionType::done) {
    throw ConfigError("the done sentinel is internal and must not be serialized");
  }
  if (!plan.bbox.valid()) throw ConfigError("cannot serialize an invalid bbox");

  json obj;
  obj["next_subtask_description"] = plan.next_subtask_description;
  obj["action_type"] = action_type_name(plan.action_type);
  obj["target_object"] = plan.target_object;
  obj["bbox"] = {plan.bbox.ymin, plan.bbox.xmin, plan.bbox.ymax, plan.bbox.xmax};

  // nlohmann::json stores objects sorted by key; emit the wire key order
  // explicitly instead of dumping the whole object.
  std::string out = "{";
  out += "\"next_subtask_description\":" + obj["next_subtask_description"].dump();
  out += ",\"action_type\":" + obj["action_type"].dump();
  out += ",\"target_object\":" + obj["target_object"].dump();
  out += ",\"bbox\":" + obj["bbox"].dump();
  out += "}";
  return out;
}

double iou(const NormalizedBox& a, const NormalizedBox& b) {
  if (!a.valid() || !b.valid()) throw ConfigError("iou requires valid boxes");
  const long long iy = std::max(0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const long long ix = std::max(0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const long long inter = iy * ix;
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace hivla::plan
