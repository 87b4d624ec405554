#pragma once

#include <span>
#include <string>

#include "hivla/plan/plan.hpp"

namespace hivla::plan {

/// Mean IoU over aligned prediction/ground-truth box pairs.
/// Throws ConfigError on empty or mismatched lengths.
double miou(std::span<const NormalizedBox> pred, std::span<const NormalizedBox> gt);

/// Lower-cases ASCII letters and trims surrounding whitespace; the
/// normalization applied to target names before comparing them.
std::string normalize_name(const std::string& s);

/// Fraction of aligned plan pairs whose action_type and normalized
/// target_object both match. Descriptions and boxes are not compared.
double exact_match(std::span<const StructuredPlan> pred, std::span<const StructuredPlan> gt);

}  // namespace hivla::plan
