// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "amodal/tensor.hpp"

namespace amodal {

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  bool get(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v) { bits_[index(y, x)] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool same_extents(const BinaryMask& o) const { return height_ == o.height_ && width_ == o.width_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  struct Box {
    int y0, x0, y1, x1;  // inclusive
  };
  /// Tight bounding box; nullopt when the mask is empty.
  std::optional<Box> bbox() const;

  /// Pixels shifted by (dx, dy); vacated pixels become 0.
  BinaryMask shifted(int dx, int dy) const;
  Tensor to_tensor() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);

/// Three-level validity map: 0 hidden, 1 visible object, 0.5 remaining context.
class WeightedMask {
 public:
  static constexpr double kHidden = 0.0;
  static constexpr double kContext = 0.5;
  static constexpr double kVisible = 1.0;

  WeightedMask() = default;
  WeightedMask(int height, int width, double fill = kContext);

  int height() const { return height_; }
  int width() const { return width_; }
  double get(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, double v);
  const std::vector<double>& values() const { return values_; }

  /// Pixels equal to `level` as a binary mask.
  BinaryMask level_set(double level) const;
  Tensor to_tensor() const;

  bool operator==(const WeightedMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

/// 0 where `occluded`, 1 where `visible`, 0.5 elsewhere. Inputs must be disjoint.
WeightedMask build_weighted_mask(const BinaryMask& occluded, const BinaryMask& visible);

/// Pixelwise OR of two disjoint masks.
BinaryMask amodal_union(const BinaryMask& occluded, const BinaryMask& visible);

/// An RGB image (1x3xHxW, values in [0,1]) with its modal mask.
struct ObjectCrop {
  Tensor image;
  BinaryMask mask;
  std::int64_t id = -1;
};

struct SampleMeta {
  std::int64_t target_id = -1;
  std::int64_t occluder_id = -1;
  int dx = 0;
  int dy = 0;
  std::string transform = "none";
};

struct CompositeSample {
  Tensor gt_image;      // 1x3xHxW in [0,1]
  Tensor erased_image;  // gt with occluded pixels zeroed
  BinaryMask occluded;  // M_{X and Y}
  BinaryMask visible;   // M_{X minus Y}
  BinaryMask amodal;
  WeightedMask weighted;
  SampleMeta meta;

  int height() const { return gt_image.shape().h; }
  int width() const { return gt_image.shape().w; }
};

/// Empty string when every sample invariant holds, otherwise a description of the first violation.
std::string check_invariants(const CompositeSample& sample);

struct OcclusionBounds {
  double min_ratio = 0.05;
  double max_ratio = 0.70;
};

struct ComposeResult {
  std::optional<CompositeSample> sample;  // nullopt: ratio outside bounds, resample the placement
  double ratio = 0.0;
};

/// Places the occluder's mask at (dx, dy) over the target and derives the hole,
/// visible, amodal, and weighted masks plus the erased input.
ComposeResult compose_occlusion(const ObjectCrop& target, const ObjectCrop& occluder, int dx, int dy,
                                const OcclusionBounds& bounds = {});

/// Uniform offset among those whose bounding boxes intersect; rejection-resampled.
std::optional<CompositeSample> compose_random_occlusion(const ObjectCrop& target, const ObjectCrop& occluder,
                                                        std::mt19937_64& rng, const OcclusionBounds& bounds = {},
                                                        int max_tries = 50);

struct Transform {
  enum class Kind { kNone, kHFlip, kRot90, kCrop, kShift };
  Kind kind = Kind::kNone;
  int quarter_turns = 1;         // kRot90, counter-clockwise
  int y0 = 0, x0 = 0, h = 0, w = 0;  // kCrop box
  int dx = 0, dy = 0;            // kShift

  static Transform none() { return {}; }
  static Transform hflip() { return {Kind::kHFlip}; }
  static Transform rot90(int k) {
    Transform t{Kind::kRot90};
    t.quarter_turns = ((k % 4) + 4) % 4;
    return t;
  }
  static Transform crop(int y0, int x0, int h, int w) {
    Transform t{Kind::kCrop};
    t.y0 = y0, t.x0 = x0, t.h = h, t.w = w;
    return t;
  }
  static Transform shift(int dx, int dy) {
    Transform t{Kind::kShift};
    t.dx = dx, t.dy = dy;
    return t;
  }
  std::string str() const;
};

/// Applies one geometric transform to the images and all masks identically.
/// Crop boxes are resampled (nearest) back to the original extents.
CompositeSample augment(const CompositeSample& sample, const Transform& t);

/// Same remap applied to a lone weighted mask; vacated pixels become context.
WeightedMask transform_weighted(const WeightedMask& m, const Transform& t);
BinaryMask transform_binary(const BinaryMask& m, const Transform& t);

}  // namespace amodal
