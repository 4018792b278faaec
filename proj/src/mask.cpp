// SPDX-License-Identifier: Apache-2.0
#include "amodal/mask.hpp"

#include <algorithm>
#include <sstream>

#include "amodal/error.hpp"

namespace amodal {

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {
  require(height >= 0 && width >= 0, ErrorKind::kShape, "negative mask extents");
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  require(bits_.size() == static_cast<std::size_t>(height) * width, ErrorKind::kShape, "mask bit count mismatch");
  for (auto& b : bits_) {
    require(b <= 1, ErrorKind::kData, "binary mask value outside {0,1}");
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::optional<BinaryMask::Box> BinaryMask::bbox() const {
  Box b{height_, width_, -1, -1};
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (get(y, x)) {
        b.y0 = std::min(b.y0, y), b.x0 = std::min(b.x0, x);
        b.y1 = std::max(b.y1, y), b.x1 = std::max(b.x1, x);
      }
  if (b.y1 < 0) return std::nullopt;
  return b;
}

BinaryMask BinaryMask::shifted(int dx, int dy) const {
  BinaryMask out(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const int sy = y - dy, sx = x - dx;
      if (sy >= 0 && sy < height_ && sx >= 0 && sx < width_) out.set(y, x, get(sy, sx));
    }
  return out;
}

Tensor BinaryMask::to_tensor() const {
  Tensor t({1, 1, height_, width_});
  for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i];
  return t;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_extents(b), ErrorKind::kShape, "mask_and: extent mismatch");
  BinaryMask out(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out.set(y, x, a.get(y, x) && b.get(y, x));
  return out;
}

BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_extents(b), ErrorKind::kShape, "mask_and_not: extent mismatch");
  BinaryMask out(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out.set(y, x, a.get(y, x) && !b.get(y, x));
  return out;
}

WeightedMask::WeightedMask(int height, int width, double fill)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width) {
  require(height >= 0 && width >= 0, ErrorKind::kShape, "negative mask extents");
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) set(y, x, fill);
}

void WeightedMask::set(int y, int x, double v) {
  require(v == kHidden || v == kContext || v == kVisible, ErrorKind::kData, "weighted mask value outside {0,0.5,1}");
  values_[static_cast<std::size_t>(y) * width_ + x] = v;
}

BinaryMask WeightedMask::level_set(double level) const {
  BinaryMask out(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.set(y, x, get(y, x) == level);
  return out;
}

Tensor WeightedMask::to_tensor() const { return Tensor({1, 1, height_, width_}, values_); }

WeightedMask build_weighted_mask(const BinaryMask& occluded, const BinaryMask& visible) {
  require(occluded.same_extents(visible), ErrorKind::kShape, "build_weighted_mask: extent mismatch");
  WeightedMask out(occluded.height(), occluded.width(), WeightedMask::kContext);
  for (int y = 0; y < occluded.height(); ++y)
    for (int x = 0; x < occluded.width(); ++x) {
      const bool o = occluded.get(y, x), v = visible.get(y, x);
      require(!(o && v), ErrorKind::kData, "build_weighted_mask: occluded and visible masks overlap");
      if (o) out.set(y, x, WeightedMask::kHidden);
      if (v) out.set(y, x, WeightedMask::kVisible);
    }
  return out;
}

BinaryMask amodal_union(const BinaryMask& occluded, const BinaryMask& visible) {
  require(occluded.same_extents(visible), ErrorKind::kShape, "amodal_union: extent mismatch");
  BinaryMask out(occluded.height(), occluded.width());
  for (int y = 0; y < occluded.height(); ++y)
    for (int x = 0; x < occluded.width(); ++x) {
      require(!(occluded.get(y, x) && visible.get(y, x)), ErrorKind::kData, "amodal_union: masks overlap");
      out.set(y, x, occluded.get(y, x) || visible.get(y, x));
    }
  return out;
}

std::string check_invariants(const CompositeSample& s) {
  const int h = s.height(), w = s.width();
  if (s.gt_image.shape() != Shape{1, 3, h, w} || s.erased_image.shape() != s.gt_image.shape())
    return "image shape mismatch";
  for (const BinaryMask* m : {&s.occluded, &s.visible, &s.amodal})
    if (m->height() != h || m->width() != w) return "mask extents differ from image";
  if (s.weighted.height() != h || s.weighted.width() != w) return "weighted mask extents differ from image";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool o = s.occluded.get(y, x), v = s.visible.get(y, x);
      if (o && v) return "occluded and visible overlap";
      if (s.amodal.get(y, x) != (o || v)) return "amodal differs from occluded|visible";
      const double expected = o ? WeightedMask::kHidden : (v ? WeightedMask::kVisible : WeightedMask::kContext);
      if (s.weighted.get(y, x) != expected) return "weighted mask level mismatch";
      for (int c = 0; c < 3; ++c) {
        const double e = s.erased_image.at(0, c, y, x);
        if (o ? (e != 0.0) : (e != s.gt_image.at(0, c, y, x))) return "erased image mismatch";
      }
    }
  return {};
}

ComposeResult compose_occlusion(const ObjectCrop& target, const ObjectCrop& occluder, int dx, int dy,
                                const OcclusionBounds& bounds) {
  require(!target.mask.empty(), ErrorKind::kData, "compose_occlusion: empty target mask");
  require(!occluder.mask.empty(), ErrorKind::kData, "compose_occlusion: empty occluder mask");
  require(target.mask.same_extents(occluder.mask), ErrorKind::kShape, "compose_occlusion: extent mismatch");
  const Shape is = target.image.shape();
  require(is == Shape{1, 3, target.mask.height(), target.mask.width()}, ErrorKind::kShape,
          "compose_occlusion: target image shape " + is.str());

  const BinaryMask placed = occluder.mask.shifted(dx, dy);
  BinaryMask occluded = mask_and(target.mask, placed);
  ComposeResult result;
  result.ratio = static_cast<double>(occluded.count()) / static_cast<double>(target.mask.count());
  if (result.ratio < bounds.min_ratio || result.ratio > bounds.max_ratio || occluded.empty()) return result;

  CompositeSample s;
  s.visible = mask_and_not(target.mask, placed);
  s.amodal = amodal_union(occluded, s.visible);
  s.weighted = build_weighted_mask(occluded, s.visible);
  s.gt_image = target.image;
  s.erased_image = target.image;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < is.h; ++y)
      for (int x = 0; x < is.w; ++x)
        if (occluded.get(y, x)) s.erased_image.at(0, c, y, x) = 0.0;
  s.occluded = std::move(occluded);
  s.meta.target_id = target.id;
  s.meta.occluder_id = occluder.id;
  s.meta.dx = dx;
  s.meta.dy = dy;
  result.sample = std::move(s);
  return result;
}

std::optional<CompositeSample> compose_random_occlusion(const ObjectCrop& target, const ObjectCrop& occluder,
                                                        std::mt19937_64& rng, const OcclusionBounds& bounds,
                                                        int max_tries) {
  const auto tb = target.mask.bbox();
  const auto ob = occluder.mask.bbox();
  require(tb.has_value() && ob.has_value(), ErrorKind::kData, "compose_random_occlusion: empty mask");
  std::uniform_int_distribution<int> dx_dist(tb->x0 - ob->x1, tb->x1 - ob->x0);
  std::uniform_int_distribution<int> dy_dist(tb->y0 - ob->y1, tb->y1 - ob->y0);
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const int dx = dx_dist(rng);
    const int dy = dy_dist(rng);
    ComposeResult r = compose_occlusion(target, occluder, dx, dy, bounds);
    if (r.sample) return std::move(r.sample);
  }
  return std::nullopt;
}

std::string Transform::str() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kNone: os << "none"; break;
    case Kind::kHFlip: os << "hflip"; break;
    case Kind::kRot90: os << "rot90x" << quarter_turns; break;
    case Kind::kCrop: os << "crop:" << y0 << "," << x0 << "," << h << "," << w; break;
    case Kind::kShift: os << "shift:" << dx << "," << dy; break;
  }
  return os.str();
}

namespace {

// Maps each output pixel to a source pixel, or (-1,-1) for vacated pixels.
struct PixelMap {
  int out_h = 0, out_w = 0;
  std::vector<int> src;  // 2 ints per output pixel

  std::pair<int, int> at(int y, int x) const {
    const std::size_t i = 2 * (static_cast<std::size_t>(y) * out_w + x);
    return {src[i], src[i + 1]};
  }
};

PixelMap make_map(int h, int w, const Transform& t) {
  PixelMap m;
  auto fill = [&](int oh, int ow, auto fn) {
    m.out_h = oh, m.out_w = ow;
    m.src.assign(2 * static_cast<std::size_t>(oh) * ow, -1);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        auto [sy, sx] = fn(y, x);
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
          const std::size_t i = 2 * (static_cast<std::size_t>(y) * ow + x);
          m.src[i] = sy, m.src[i + 1] = sx;
        }
      }
  };
  switch (t.kind) {
    case Transform::Kind::kNone:
      fill(h, w, [](int y, int x) { return std::pair{y, x}; });
      break;
    case Transform::Kind::kHFlip:
      fill(h, w, [w](int y, int x) { return std::pair{y, w - 1 - x}; });
      break;
    case Transform::Kind::kRot90: {
      const int k = ((t.quarter_turns % 4) + 4) % 4;
      const int oh = (k % 2) ? w : h, ow = (k % 2) ? h : w;
      fill(oh, ow, [=](int y, int x) {
        switch (k) {
          case 1: return std::pair{x, w - 1 - y};
          case 2: return std::pair{h - 1 - y, w - 1 - x};
          case 3: return std::pair{h - 1 - x, y};
          default: return std::pair{y, x};
        }
      });
      break;
    }
    case Transform::Kind::kCrop:
      require(t.h > 0 && t.w > 0 && t.y0 >= 0 && t.x0 >= 0 && t.y0 + t.h <= h && t.x0 + t.w <= w, ErrorKind::kData,
              "augment: crop box outside frame");
      fill(h, w, [&](int y, int x) {
        return std::pair{t.y0 + static_cast<int>(static_cast<long>(y) * t.h / h),
                         t.x0 + static_cast<int>(static_cast<long>(x) * t.w / w)};
      });
      break;
    case Transform::Kind::kShift:
      fill(h, w, [&](int y, int x) { return std::pair{y - t.dy, x - t.dx}; });
      break;
  }
  return m;
}

BinaryMask remap(const BinaryMask& m, const PixelMap& map) {
  BinaryMask out(map.out_h, map.out_w);
  for (int y = 0; y < map.out_h; ++y)
    for (int x = 0; x < map.out_w; ++x) {
      auto [sy, sx] = map.at(y, x);
      if (sy >= 0) out.set(y, x, m.get(sy, sx));
    }
  return out;
}

WeightedMask remap(const WeightedMask& m, const PixelMap& map) {
  WeightedMask out(map.out_h, map.out_w, WeightedMask::kContext);
  for (int y = 0; y < map.out_h; ++y)
    for (int x = 0; x < map.out_w; ++x) {
      auto [sy, sx] = map.at(y, x);
      if (sy >= 0) out.set(y, x, m.get(sy, sx));
    }
  return out;
}

Tensor remap(const Tensor& img, const PixelMap& map) {
  const Shape s = img.shape();
  Tensor out({s.n, s.c, map.out_h, map.out_w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < map.out_h; ++y)
        for (int x = 0; x < map.out_w; ++x) {
          auto [sy, sx] = map.at(y, x);
          if (sy >= 0) out.at(n, c, y, x) = img.at(n, c, sy, sx);
        }
  return out;
}

}  // namespace

WeightedMask transform_weighted(const WeightedMask& m, const Transform& t) {
  return remap(m, make_map(m.height(), m.width(), t));
}

BinaryMask transform_binary(const BinaryMask& m, const Transform& t) {
  return remap(m, make_map(m.height(), m.width(), t));
}

CompositeSample augment(const CompositeSample& sample, const Transform& t) {
  const PixelMap map = make_map(sample.height(), sample.width(), t);
  CompositeSample out;
  out.gt_image = remap(sample.gt_image, map);
  out.erased_image = remap(sample.erased_image, map);
  out.occluded = remap(sample.occluded, map);
  out.visible = remap(sample.visible, map);
  out.amodal = remap(sample.amodal, map);
  out.weighted = remap(sample.weighted, map);
  out.meta = sample.meta;
  out.meta.transform = sample.meta.transform == "none" ? t.str() : sample.meta.transform + "+" + t.str();
  require(!out.visible.empty(), ErrorKind::kData, "augment: transform " + t.str() + " evicts the visible region");
  return out;
}

}  // namespace amodal
