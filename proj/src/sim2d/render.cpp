#include "hivla/sim2d/render.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hivla/core/errors.hpp"

namespace hivla::sim2d {

namespace {

constexpr double kGripperHalf = 0.012;
constexpr float kVoidGray = 0.08f;

Eigen::Vector3f gripper_rgb(double open_fraction) {
  const Eigen::Vector3f closed(0.15f, 0.05f, 0.30f);
  const Eigen::Vector3f open(0.95f, 0.35f, 0.75f);
  const float t = static_cast<float>(open_fraction);
  return closed + t * (open - closed);
}

struct WindowMap {
  double wx0, wy0, wx1, wy1;
  int width, height;

  std::pair<int, int> cols(double lo, double hi) const {
    return pixel_span((lo - wx0) / (wx1 - wx0), (hi - wx0) / (wx1 - wx0), width);
  }
  std::pair<int, int> rows(double lo, double hi) const {
    return pixel_span((lo - wy0) / (wy1 - wy0), (hi - wy0) / (wy1 - wy0), height);
  }
  double row_center_y(int i) const { return wy0 + (i + 0.5) / height * (wy1 - wy0); }
};

void fill_rows_cols(Image& img, int r0, int r1, int c0, int c1, const Eigen::Vector3f& rgb) {
  if (r0 > r1 || c0 > c1) return;
  img.r.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setConstant(rgb.x());
  img.g.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setConstant(rgb.y());
  img.b.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setConstant(rgb.z());
}

void draw_rect(Image& img, const WindowMap& map, const Eigen::Vector2d& center,
               const Eigen::Vector2d& half, const Eigen::Vector3f& rgb) {
  const auto [r0, r1] = map.rows(center.y() - half.y(), center.y() + half.y());
  const auto [c0, c1] = map.cols(center.x() - half.x(), center.x() + half.x());
  fill_rows_cols(img, r0, r1, c0, c1, rgb);
}

void draw_circle(Image& img, const WindowMap& map, const Eigen::Vector2d& center,
                 const Eigen::Vector2d& radii, const Eigen::Vector3f& rgb) {
  const auto [r0, r1] = map.rows(center.y() - radii.y(), center.y() + radii.y());
  for (int i = r0; i <= r1; ++i) {
    const double dy = (map.row_center_y(i) - center.y()) / radii.y();
    const double s = 1.0 - dy * dy;
    if (s <= 0.0) continue;
    const double hw = radii.x() * std::sqrt(s);
    const auto [c0, c1] = map.cols(center.x() - hw, center.x() + hw);
    fill_rows_cols(img, i, i, c0, c1, rgb);
  }
}

std::vector<const ObjectRecord*> paint_order(const SceneState& state) {
  std::vector<const ObjectRecord*> order;
  for (const auto& o : state.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const ObjectRecord* a, const ObjectRecord* b) {
    if (a->held != b->held) return !a->held;
    if (a->z_order != b->z_order) return a->z_order < b->z_order;
    return a->id < b->id;
  });
  return order;
}

}  // namespace

std::pair<int, int> pixel_span(double lo, double hi, int n) {
  int first = static_cast<int>(std::ceil(n * lo - 0.5));
  int last = static_cast<int>(std::ceil(n * hi - 0.5)) - 1;
  first = std::max(first, 0);
  last = std::min(last, n - 1);
  return {first, last};
}

Image render_window(const SceneState& state, double wx0, double wy0, double wx1, double wy1,
                    int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("render target must be non-empty");
  if (wx1 <= wx0 || wy1 <= wy0) throw ConfigError("render window must be non-empty");

  Image img(width, height);
  const WindowMap map{wx0, wy0, wx1, wy1, width, height};

  img.fill(kVoidGray, kVoidGray, kVoidGray);
  const auto [wr0, wr1] = map.rows(0.0, 1.0);
  const auto [wc0, wc1] = map.cols(0.0, 1.0);
  fill_rows_cols(img, wr0, wr1, wc0, wc1, state.background);

  for (const ObjectRecord* o : paint_order(state)) {
    if (o->shape == ObjShape::rect) {
      draw_rect(img, map, o->center, o->half_extent, color_rgb(o->color));
    } else {
      draw_circle(img, map, o->center, o->half_extent, color_rgb(o->color));
    }
  }

  draw_rect(img, map, state.gripper.pos, Eigen::Vector2d(kGripperHalf, kGripperHalf),
            gripper_rgb(state.gripper.open_fraction));
  return img;
}

Image render(const SceneState& state, ViewKind view, const SimConfig& cfg) {
  switch (view) {
    case ViewKind::global_lo:
      return render_window(state, 0.0, 0.0, 1.0, 1.0, cfg.global_width, cfg.global_height);
    case ViewKind::global_hd:
      return render_window(state, 0.0, 0.0, 1.0, 1.0, cfg.hd_width, cfg.hd_height);
    case ViewKind::wrist: {
      const double h = cfg.wrist_half_extent;
      const Eigen::Vector2d c = state.gripper.pos;
      return render_window(state, c.x() - h, c.y() - h, c.x() + h, c.y() + h, cfg.wrist_size,
                           cfg.wrist_size);
    }
  }
  throw ConfigError("unknown view kind");
}

plan::NormalizedBox ground_truth_bbox(const SceneState& state, int object_id, int width, int height) {
  const ObjectRecord* obj = state.find(object_id);
  if (obj == nullptr) throw ConfigError("ground_truth_bbox: unknown object id");
  if (width <= 0 || height <= 0) throw ConfigError("ground_truth_bbox: empty raster");

  const WindowMap map{0.0, 0.0, 1.0, 1.0, width, height};
  int r0 = height, r1 = -1, c0 = width, c1 = -1;

  if (obj->shape == ObjShape::rect) {
    std::tie(r0, r1) = map.rows(obj->center.y() - obj->half_extent.y(),
                                obj->center.y() + obj->half_extent.y());
    std::tie(c0, c1) = map.cols(obj->center.x() - obj->half_extent.x(),
                                obj->center.x() + obj->half_extent.x());
    if (r0 > r1 || c0 > c1) r1 = -1;
  } else {
    const auto [rr0, rr1] = map.rows(obj->center.y() - obj->half_extent.y(),
                                     obj->center.y() + obj->half_extent.y());
    for (int i = rr0; i <= rr1; ++i) {
      const double dy = (map.row_center_y(i) - obj->center.y()) / obj->half_extent.y();
      const double s = 1.0 - dy * dy;
      if (s <= 0.0) continue;
      const double hw = obj->half_extent.x() * std::sqrt(s);
      const auto [cc0, cc1] = map.cols(obj->center.x() - hw, obj->center.x() + hw);
      if (cc0 > cc1) continue;
      r0 = std::min(r0, i);
      r1 = std::max(r1, i);
      c0 = std::min(c0, cc0);
      c1 = std::max(c1, cc1);
    }
  }

  if (r1 < 0) {
    r0 = r1 = std::clamp(static_cast<int>(std::floor(obj->center.y() * height)), 0, height - 1);
    c0 = c1 = std::clamp(static_cast<int>(std::floor(obj->center.x() * width)), 0, width - 1);
  }

  plan::NormalizedBox box;
  box.ymin = static_cast<int>(std::llround(r0 * 1000.0 / height));
  box.ymax = static_cast<int>(std::llround((r1 + 1) * 1000.0 / height));
  box.xmin = static_cast<int>(std::llround(c0 * 1000.0 / width));
  box.xmax = static_cast<int>(std::llround((c1 + 1) * 1000.0 / width));
  if (box.ymax <= box.ymin) box.ymax = std::min(box.ymin + 1, 1000);
  if (box.xmax <= box.xmin) box.xmax = std::min(box.xmin + 1, 1000);
  if (box.ymax <= box.ymin) box.ymin = box.ymax - 1;
  if (box.xmax <= box.xmin) box.xmin = box.xmax - 1;
  return box;
}

}  // namespace hivla::sim2d
