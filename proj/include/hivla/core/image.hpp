#pragma once

#include <Eigen/Core>

#include "hivla/core/array_io.hpp"
#include "hivla/core/errors.hpp"

namespace hivla {

/// RGB float image, values in [0, 1], stored as one height x width plane per
/// channel. Serializes as an (H, W, 3) f32 array with interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  Eigen::MatrixXf r, g, b;

  Image() = default;
  Image(int w, int h) : width(w), height(h) {
    r.setZero(h, w);
    g.setZero(h, w);
    b.setZero(h, w);
  }

  void fill(float fr, float fg, float fb) {
    r.setConstant(fr);
    g.setConstant(fg);
    b.setConstant(fb);
  }
};

inline Array image_to_array(const Image& img) {
  std::vector<float> v(static_cast<std::size_t>(img.height) * img.width * 3);
  std::size_t k = 0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      v[k++] = img.r(i, j);
      v[k++] = img.g(i, j);
      v[k++] = img.b(i, j);
    }
  }
  return Array::from_f32(v, {static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width), 3});
}

inline Image array_to_image(const Array& a) {
  if (a.dims.size() != 3 || a.dims[2] != 3) throw RuntimeError("expected (H, W, 3) image array");
  Image img(static_cast<int>(a.dims[1]), static_cast<int>(a.dims[0]));
  const std::vector<float> v = a.as_f32();
  std::size_t k = 0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      img.r(i, j) = v[k++];
      img.g(i, j) = v[k++];
      img.b(i, j) = v[k++];
    }
  }
  return img;
}

}  // namespace hivla
