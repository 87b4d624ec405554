#pragma once

#include <Eigen/Core>

#include "hivla/core/image.hpp"
#include "hivla/plan/plan.hpp"

namespace hivla::plan {

/// A square resample of the region a plan bbox selects in a source frame.
/// `centers` holds one row per patch of the output image, giving the patch
/// center position in original-frame pixel coordinates (x, y), row-major over
/// the patch grid. Those positions anchor the crop's absolute position
/// embedding, so they refer to the source frame, not the crop.
struct CropResult {
  Image image;
  Eigen::MatrixXd centers;
  int src_width = 0;
  int src_height = 0;
};

/// Resamples the bbox region of `src` to out_side x out_side with bilinear
/// interpolation (edge clamp) and computes patch-center positions for a
/// patch_side patch grid. The bbox is interpreted in the [0, 1000] normalized
/// frame of `src`. Throws ConfigError for an invalid bbox, a patch grid that
/// does not divide out_side, or a region smaller than one source pixel.
CropResult crop_image(const Image& src, const NormalizedBox& bbox, int out_side, int patch_side);

}  // namespace hivla::plan
