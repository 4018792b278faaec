// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "amodal/error.hpp"
#include "amodal/mask.hpp"
#include "oracles.hpp"

using namespace amodal;

namespace {

BinaryMask rect(int h, int w, int y0, int x0, int y1, int x1) {
  BinaryMask m(h, w);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set(y, x, true);
  return m;
}





}  // namespace

TEST_SUITE("mask-algebra") {

TEST_CASE("occluder outside the target bbox is rejected with ratio 0") {
  std::mt19937_64 rng(1);
  const auto t = oracle::crop_of(rect(8, 8, 0, 0, 2, 2), rng, 1);
  const auto o = oracle::crop_of(rect(8, 8, 5, 5, 7, 7), rng, 2);
  const auto r = compose_occlusion(t, o, 0, 0);
  CHECK(r.ratio == 0.0);
  CHECK_FALSE(r.sample.has_value());
}

TEST_CASE("half-covering occluder gives ratio 0.5 and the right half visible") {
  std::mt19937_64 rng(2);
  const auto t = oracle::crop_of(rect(8, 8, 2, 2, 5, 5), rng, 1);
  const auto o = oracle::crop_of(rect(8, 8, 2, 0, 5, 1), rng, 2);  // 4x2, shifted right by 2 onto columns 2..3
  const auto r = compose_occlusion(t, o, 2, 0);
  REQUIRE(r.sample.has_value());
  CHECK(r.ratio == 0.5);
  CHECK(r.sample->visible == rect(8, 8, 2, 4, 5, 5));
  CHECK(r.sample->occluded == rect(8, 8, 2, 2, 5, 3));
  REQUIRE(oracle::sample_exact(*r.sample));
}

TEST_CASE("full cover exceeds the maximum ratio") {
  std::mt19937_64 rng(3);
  const auto t = oracle::crop_of(rect(8, 8, 2, 2, 5, 5), rng, 1);
  const auto o = oracle::crop_of(rect(8, 8, 1, 1, 6, 6), rng, 2);
  const auto r = compose_occlusion(t, o, 0, 0);
  CHECK(r.ratio == 1.0);
  CHECK_FALSE(r.sample.has_value());
}

TEST_CASE("weighted mask piecewise levels") {
  BinaryMask occ(2, 2), vis(2, 2);
  occ.set(0, 0, true);
  vis.set(0, 1, true);
  const WeightedMask w = build_weighted_mask(occ, vis);
  CHECK(w.values() == std::vector<double>{0.0, 1.0, 0.5, 0.5});
  const WeightedMask none = build_weighted_mask(BinaryMask(2, 2), BinaryMask(2, 2));
  CHECK(none.values() == std::vector<double>(4, 0.5));
  CHECK_THROWS_AS(build_weighted_mask(occ, occ), Error);
}

TEST_CASE("weighted histogram and union counts on random disjoint pairs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMask occ(9, 7), vis(9, 7);
    std::uniform_int_distribution<int> tri(0, 2);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 7; ++x) {
        const int v = tri(rng);
        occ.set(y, x, v == 0);
        vis.set(y, x, v == 1);
      }
    const WeightedMask w = build_weighted_mask(occ, vis);
    CHECK(w.level_set(0.0).count() == occ.count());
    CHECK(w.level_set(1.0).count() == vis.count());
    CHECK(w.level_set(0.5).count() == 63 - occ.count() - vis.count());
    CHECK(amodal_union(occ, vis).count() == occ.count() + vis.count());
  }
}

TEST_CASE("amodal union identities") {
  const BinaryMask left = rect(4, 4, 0, 0, 3, 1), right = rect(4, 4, 0, 2, 3, 3);
  CHECK(amodal_union(left, right) == BinaryMask(4, 4, 1));
  CHECK(amodal_union(BinaryMask(4, 4), right) == right);
  CHECK_THROWS_AS(amodal_union(BinaryMask(4, 4), BinaryMask(4, 5)), Error);
}

TEST_CASE("1000 random composites satisfy the exact set equalities and ratio bounds") {
  std::mt19937_64 rng(2025);
  const OcclusionBounds bounds;
  int emitted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = oracle::crop_of(oracle::random_blob(16, rng), rng, 1);
    const auto o = oracle::crop_of(oracle::random_blob(16, rng), rng, 2);
    auto s = compose_random_occlusion(t, o, rng, bounds, 50);
    if (!s) continue;
    ++emitted;
    const double ratio = static_cast<double>(s->occluded.count()) / static_cast<double>(t.mask.count());
    REQUIRE(ratio >= bounds.min_ratio);
    REQUIRE(ratio <= bounds.max_ratio);
    REQUIRE(check_invariants(*s).empty());
    REQUIRE(oracle::sample_exact(*s));
  }
  CHECK(emitted > 900);
}

TEST_CASE("augmentation commutes with weighted-mask construction bit-exactly") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = oracle::crop_of(oracle::random_blob(16, rng), rng, 1);
    const auto o = oracle::crop_of(oracle::random_blob(16, rng), rng, 2);
    const auto s = compose_random_occlusion(t, o, rng);
    if (!s) continue;
    for (const Transform& tr : oracle::transforms_for(16, rng)) {
      const WeightedMask transform_then_build =
          build_weighted_mask(transform_binary(s->occluded, tr), transform_binary(s->visible, tr));
      const WeightedMask build_then_transform = transform_weighted(s->weighted, tr);
      REQUIRE(transform_then_build == build_then_transform);
      try {
        const CompositeSample a = augment(*s, tr);
        REQUIRE(a.weighted == transform_then_build);
        REQUIRE(a.occluded == transform_binary(s->occluded, tr));
        REQUIRE(oracle::sample_exact(a));
        ++checked;
      } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::kData);  // visible region evicted
      }
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("hflip is an involution and four quarter turns are the identity") {
  std::mt19937_64 rng(9);
  std::optional<CompositeSample> s;
  while (!s) s = compose_random_occlusion(oracle::crop_of(oracle::random_blob(12, rng), rng, 1), oracle::crop_of(oracle::random_blob(12, rng), rng, 2), rng);
  const CompositeSample twice = augment(augment(*s, Transform::hflip()), Transform::hflip());
  CHECK(twice.gt_image.to_vector() == s->gt_image.to_vector());
  CHECK(twice.erased_image.to_vector() == s->erased_image.to_vector());
  CHECK(twice.weighted == s->weighted);
  CHECK(twice.amodal == s->amodal);
  CompositeSample r = *s;
  for (int i = 0; i < 4; ++i) r = augment(r, Transform::rot90(1));
  CHECK(r.gt_image.to_vector() == s->gt_image.to_vector());
  CHECK(r.occluded == s->occluded);
  CHECK(r.visible == s->visible);
}

TEST_CASE("crop preserves the sample invariants") {
  std::mt19937_64 rng(10);
  int ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto s = compose_random_occlusion(oracle::crop_of(oracle::random_blob(16, rng), rng, 1), oracle::crop_of(oracle::random_blob(16, rng), rng, 2), rng);
    if (!s) continue;
    try {
      const CompositeSample c = augment(*s, Transform::crop(2, 2, 12, 12));
      CHECK(check_invariants(c).empty());
      REQUIRE(oracle::sample_exact(c));
      ++ok;
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kData);
    }
  }
  CHECK(ok > 0);
}

TEST_CASE("a transform that evicts the visible region is an error") {
  std::mt19937_64 rng(11);
  const auto t = oracle::crop_of(rect(8, 8, 0, 0, 3, 3), rng, 1);
  const auto o = oracle::crop_of(rect(8, 8, 0, 0, 1, 3), rng, 2);
  const auto r = compose_occlusion(t, o, 0, 0);
  REQUIRE(r.sample.has_value());
  CHECK_THROWS_AS(augment(*r.sample, Transform::shift(7, 7)), Error);
}

}  // TEST_SUITE
