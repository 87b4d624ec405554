#pragma once

#include <utility>

#include "hivla/core/image.hpp"
#include "hivla/plan/plan.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::sim2d {

enum class ViewKind { global_lo, global_hd, wrist };

/// Pixel-center coverage: the inclusive index range of pixels whose centers
/// fall in the world interval [lo, hi), for n pixels spanning [0, 1].
/// Returns first > last when no pixel center is covered.
std::pair<int, int> pixel_span(double lo, double hi, int n);

/// Renders the world window [wx0, wx1] x [wy0, wy1] to a W x H image.
/// Painter's order: background, objects by ascending (held, z_order, id),
/// gripper marker last. Regions outside the unit workspace render dark.
Image render_window(const SceneState& state, double wx0, double wy0, double wx1, double wy1,
                    int width, int height);

/// Camera views: full-workspace global frame at low or HD resolution, or a
/// fixed-zoom wrist window centered on the gripper.
Image render(const SceneState& state, ViewKind view, const SimConfig& cfg = {});

/// Tight box, in the [0, 1000] normalized frame, around the pixels the object
/// would cover when rasterized alone at width x height. Matches the rasterizer
/// exactly (same pixel-center rule). Throws ConfigError for unknown ids.
plan::NormalizedBox ground_truth_bbox(const SceneState& state, int object_id, int width, int height);

}  // namespace hivla::sim2d
