#include "hivla/plan/metrics.hpp"

#include <cctype>

#include "hivla/core/errors.hpp"

namespace hivla::plan {

double miou(std::span<const NormalizedBox> pred, std::span<const NormalizedBox> gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw ConfigError("miou requires equal-length non-empty box lists");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += iou(pred[i], gt[i]);
  return total / static_cast<double>(pred.size());
}

std::string normalize_name(const std::string& s) {
  std::size_t lo = 0;
  std::size_t hi = s.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
  std::string out;
  out.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  }
  return out;
}

double exact_match(std::span<const StructuredPlan> pred, std::span<const StructuredPlan> gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw ConfigError("exact_match requires equal-length non-empty plan lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].action_type == gt[i].action_type &&
        normalize_name(pred[i].target_object) == normalize_name(gt[i].target_object)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace hivla::plan
