#include "hivla/plan/crop.hpp"

#include <cmath>

#include "hivla/core/errors.hpp"

namespace hivla::plan {

namespace {

float sample_bilinear(const Eigen::MatrixXf& plane, double x, double y) {
  const int w = static_cast<int>(plane.cols());
  const int h = static_cast<int>(plane.rows());
  const double xf = x - 0.5;
  const double yf = y - 0.5;
  const int x0 = static_cast<int>(std::floor(xf));
  const int y0 = static_cast<int>(std::floor(yf));
  const double tx = xf - x0;
  const double ty = yf - y0;
  const auto cx = [w](int v) { return std::clamp(v, 0, w - 1); };
  const auto cy = [h](int v) { return std::clamp(v, 0, h - 1); };
  const double v00 = plane(cy(y0), cx(x0));
  const double v01 = plane(cy(y0), cx(x0 + 1));
  const double v10 = plane(cy(y0 + 1), cx(x0));
  const double v11 = plane(cy(y0 + 1), cx(x0 + 1));
  const double top = v00 + tx * (v01 - v00);
  const double bot = v10 + tx * (v11 - v10);
  return static_cast<float>(top + ty * (bot - top));
}

}  // namespace

CropResult crop_image(const Image& src, const NormalizedBox& bbox, int out_side, int patch_side) {
  if (!bbox.valid()) throw ConfigError("crop_image requires a valid bbox");
  if (src.width <= 0 || src.height <= 0) throw ConfigError("crop_image requires a non-empty image");
  if (out_side <= 0 || patch_side <= 0 || out_side % patch_side != 0) {
    throw ConfigError("crop output side must be a positive multiple of the patch side");
  }

  const double x0 = bbox.xmin / 1000.0 * src.width;
  const double x1 = bbox.xmax / 1000.0 * src.width;
  const double y0 = bbox.ymin / 1000.0 * src.height;
  const double y1 = bbox.ymax / 1000.0 * src.height;
  if (x1 - x0 < 1.0 || y1 - y0 < 1.0) {
    throw ConfigError("crop region is smaller than one source pixel");
  }

  CropResult out;
  out.image = Image(out_side, out_side);
  out.src_width = src.width;
  out.src_height = src.height;

  for (int oi = 0; oi < out_side; ++oi) {
    const double sy = y0 + (oi + 0.5) / out_side * (y1 - y0);
    for (int oj = 0; oj < out_side; ++oj) {
      const double sx = x0 + (oj + 0.5) / out_side * (x1 - x0);
      out.image.r(oi, oj) = sample_bilinear(src.r, sx, sy);
      out.image.g(oi, oj) = sample_bilinear(src.g, sx, sy);
      out.image.b(oi, oj) = sample_bilinear(src.b, sx, sy);
    }
  }

  const int grid = out_side / patch_side;
  out.centers.resize(static_cast<Eigen::Index>(grid) * grid, 2);
  for (int pi = 0; pi < grid; ++pi) {
    const double cy = y0 + (pi + 0.5) * patch_side / static_cast<double>(out_side) * (y1 - y0);
    for (int pj = 0; pj < grid; ++pj) {
      const double cx = x0 + (pj + 0.5) * patch_side / static_cast<double>(out_side) * (x1 - x0);
      out.centers(pi * grid + pj, 0) = cx;
      out.centers(pi * grid + pj, 1) = cy;
    }
  }
  return out;
}

}  // namespace hivla::plan
