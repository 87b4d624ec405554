#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <vector>

#include "doctest.h"
#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/plan/crop.hpp"
#include "hivla/plan/metrics.hpp"

using namespace hivla;
using namespace hivla::plan;

namespace {

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      img.r(i, j) = static_cast<float>(j);          // x ramp
      img.g(i, j) = static_cast<float>(i);          // y ramp
      img.b(i, j) = static_cast<float>(i + 2 * j);  // mixed ramp
    }
  return img;
}

/// Independent IoU oracle: rasterize both boxes on the integer [0,1000) cell
/// grid and count cells. Exact for integer-coordinate boxes.
double raster_iou(const NormalizedBox& a, const NormalizedBox& b) {
  static std::vector<char> ma(1000 * 1000), mb(1000 * 1000);
  std::memset(ma.data(), 0, ma.size());
  std::memset(mb.data(), 0, mb.size());
  for (int r = a.ymin; r < a.ymax; ++r)
    for (int c = a.xmin; c < a.xmax; ++c) ma[static_cast<std::size_t>(r) * 1000 + c] = 1;
  for (int r = b.ymin; r < b.ymax; ++r)
    for (int c = b.xmin; c < b.xmax; ++c) mb[static_cast<std::size_t>(r) * 1000 + c] = 1;
  long long inter = 0, uni = 0;
  for (std::size_t k = 0; k < ma.size(); ++k) {
    inter += ma[k] & mb[k];
    uni += ma[k] | mb[k];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

NormalizedBox random_box(Rng& rng) {
  NormalizedBox b;
  b.ymin = rng.uniform_int(0, 998);
  b.xmin = rng.uniform_int(0, 998);
  b.ymax = rng.uniform_int(b.ymin + 1, 1000);
  b.xmax = rng.uniform_int(b.xmin + 1, 1000);
  return b;
}

}  // namespace

TEST_CASE("full-frame crop of a square image reproduces it exactly") {
  const Image src = gradient_image(64, 64);
  const CropResult c = crop_image(src, {0, 0, 1000, 1000}, 64, 16);
  CHECK(c.image.r == src.r);
  CHECK(c.image.g == src.g);
  CHECK(c.image.b == src.b);
  CHECK(c.src_width == 64);
  CHECK(c.src_height == 64);
}

TEST_CASE("crop of a constant image is constant") {
  Image src(80, 60);
  src.fill(0.25f, 0.5f, 0.75f);
  const CropResult c = crop_image(src, {130, 210, 700, 860}, 48, 16);
  CHECK(c.image.r.minCoeff() == 0.25f);
  CHECK(c.image.r.maxCoeff() == 0.25f);
  CHECK(c.image.g.minCoeff() == 0.5f);
  CHECK(c.image.b.maxCoeff() == 0.75f);
}

TEST_CASE("crop samples a linear ramp at the analytic positions") {
  // Bilinear interpolation reproduces a linear function exactly away from the
  // clamped border, so each output pixel value equals the source coordinate
  // it was sampled at (minus the half-pixel center offset).
  const Image src = gradient_image(100, 100);
  const NormalizedBox bbox{200, 300, 800, 900};  // interior region
  const int side = 32;
  const CropResult c = crop_image(src, bbox, side, 16);
  const double x0 = bbox.xmin / 1000.0 * 100, x1 = bbox.xmax / 1000.0 * 100;
  const double y0 = bbox.ymin / 1000.0 * 100, y1 = bbox.ymax / 1000.0 * 100;
  for (int oi = 0; oi < side; ++oi) {
    for (int oj = 0; oj < side; ++oj) {
      const double sx = x0 + (oj + 0.5) / side * (x1 - x0);
      const double sy = y0 + (oi + 0.5) / side * (y1 - y0);
      CHECK(c.image.r(oi, oj) == doctest::Approx(sx - 0.5).epsilon(1e-5));
      CHECK(c.image.g(oi, oj) == doctest::Approx(sy - 0.5).epsilon(1e-5));
    }
  }
}

TEST_CASE("patch centers map to source-frame coordinates") {
  const Image src = gradient_image(200, 100);
  const NormalizedBox bbox{100, 250, 500, 750};
  const int side = 64, patch = 16;
  const CropResult c = crop_image(src, bbox, side, patch);
  const int grid = side / patch;
  REQUIRE(c.centers.rows() == grid * grid);
  REQUIRE(c.centers.cols() == 2);
  const double x0 = bbox.xmin / 1000.0 * src.width, x1 = bbox.xmax / 1000.0 * src.width;
  const double y0 = bbox.ymin / 1000.0 * src.height, y1 = bbox.ymax / 1000.0 * src.height;
  for (int pi = 0; pi < grid; ++pi) {
    for (int pj = 0; pj < grid; ++pj) {
      const Eigen::Index row = pi * grid + pj;
      // Midpoint of the patch's span, mapped into the source window.
      const double ex = x0 + (pj + 0.5) * patch / static_cast<double>(side) * (x1 - x0);
      const double ey = y0 + (pi + 0.5) * patch / static_cast<double>(side) * (y1 - y0);
      CHECK(c.centers(row, 0) == doctest::Approx(ex).epsilon(1e-12));
      CHECK(c.centers(row, 1) == doctest::Approx(ey).epsilon(1e-12));
      // Centers live inside the source window.
      CHECK(c.centers(row, 0) > x0);
      CHECK(c.centers(row, 0) < x1);
      CHECK(c.centers(row, 1) > y0);
      CHECK(c.centers(row, 1) < y1);
    }
  }
}

TEST_CASE("crop rejects degenerate requests") {
  const Image src = gradient_image(100, 100);
  CHECK_THROWS_AS((void)crop_image(src, {10, 10, 5, 20}, 32, 16), ConfigError);   // inverted
  CHECK_THROWS_AS((void)crop_image(src, {0, 0, 5, 5}, 32, 16), ConfigError);      // sub-pixel
  CHECK_THROWS_AS((void)crop_image(src, {0, 0, 500, 500}, 33, 16), ConfigError);  // 33 % 16 != 0
  CHECK_THROWS_AS((void)crop_image(Image(), {0, 0, 500, 500}, 32, 16), ConfigError);
}

TEST_CASE("analytic iou matches a rasterized cell count on random pairs") {
  Rng rng(77);
  for (int i = 0; i < 120; ++i) {
    const NormalizedBox a = random_box(rng);
    const NormalizedBox b = random_box(rng);
    CHECK(iou(a, b) == doctest::Approx(raster_iou(a, b)).epsilon(1e-9));
  }
  // Include overlapping pairs explicitly (random pairs are often disjoint).
  for (int i = 0; i < 60; ++i) {
    NormalizedBox a = random_box(rng);
    NormalizedBox b = a;
    b.ymin = std::max(0, a.ymin - 50);
    b.xmin = std::max(0, a.xmin - 50);
    CHECK(iou(a, b) == doctest::Approx(raster_iou(a, b)).epsilon(1e-9));
  }
}
