#pragma once

#include <string>

#include <Eigen/Core>

#include "textmania/errors.hpp"

namespace textmania {

// Dense float image in channel-major (CHW) layout. Flattened form matches the
// rows of a batch matrix, so converting between the two is a reshape.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::VectorXf data;

  static Image zeros(int channels, int height, int width) {
    Image img;
    img.channels = channels;
    img.height = height;
    img.width = width;
    img.data = Eigen::VectorXf::Zero(
        static_cast<Eigen::Index>(channels) * height * width);
    return img;
  }

  Eigen::Index index(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * height + y) * width + x;
  }

  float& at(int c, int y, int x) { return data(index(c, y, x)); }
  float at(int c, int y, int x) const { return data(index(c, y, x)); }

  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height &&
           width == other.width;
  }
};

inline void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("image shapes differ: " + std::to_string(a.channels) +
                     "x" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " +
                     std::to_string(b.channels) + "x" +
                     std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

}  // namespace textmania
