// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amodal/tensor.hpp"

namespace amodal {

/// 8-bit interleaved raster.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1, 3 or 4
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads PNG or JPEG, detected by signature.
Image8 read_image(const std::string& path);
void write_png(const std::string& path, const Image8& image);

/// 1x3xHxW in [0,1]; grey is replicated, alpha dropped.
Tensor image_to_tensor(const Image8& image);
/// Clamps to [0,1] and rounds to 8 bits. Accepts 1xCxHxW with C in {1,3,4}.
Image8 tensor_to_image(const Tensor& t);

Tensor resize_bilinear(const Tensor& t, int height, int width);

}  // namespace amodal
