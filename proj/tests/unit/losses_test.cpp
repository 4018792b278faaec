// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "amodal/error.hpp"
#include "amodal/gradcheck.hpp"
#include "amodal/losses.hpp"
#include "oracles.hpp"

using namespace amodal;

namespace {

Tensor scores(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({1, 1, 1, n}, std::move(v));
}

double eval(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value().item();
}

// Independent recomputation of the backbone taps from its raw parameters.
std::map<std::string, Tensor> taps_oracle(FeatureBackbone& b, const Tensor& x) {
  std::map<std::string, Tensor> out;
  auto params = b.params();
  Tensor h = x;
  for (std::size_t i = 0; i < params.size() / 2; ++i) {
    if (i > 0 && b.config().downsample) h = resample_forward(h, Resample::kAvgDown2);
    const int k = b.config().kernel;
    h = oracle::conv2d(h, params[2 * i]->value, params[2 * i + 1]->value.to_vector(), 1, k / 2, 1);
    for (double& v : h.data()) v = std::max(v, 0.0);
    out["block" + std::to_string(i + 1)] = h;
  }
  return out;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

std::vector<double> gram_oracle(const Tensor& f, int n) {
  const Shape& s = f.shape();
  std::vector<double> g(static_cast<std::size_t>(s.c * s.c), 0.0);
  for (int i = 0; i < s.c; ++i)
    for (int j = 0; j < s.c; ++j) {
      double acc = 0.0;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) acc += f.at(n, i, y, x) * f.at(n, j, y, x);
      g[static_cast<std::size_t>(i * s.c + j)] = acc / (s.c * s.h * s.w);
    }
  return g;
}

BackboneConfig small_backbone() {
  BackboneConfig c;
  c.channels = {4, 6};
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("loss-suite") {

TEST_CASE("hinge_d margins") {
  auto d = [](double real, double fake) {
    return eval([&](Tape& t) { return hinge_d(t.constant(scores({real})), t.constant(scores({fake}))); });
  };
  CHECK(d(1, -1) == 0.0);
  CHECK(d(0, 0) == 2.0);
  CHECK(d(2, -3) == 0.0);
  Tape t;
  CHECK_THROWS_AS(hinge_d(t.constant(Tensor({1, 1, 0, 0})), t.constant(scores({0}))), Error);
}

TEST_CASE("hinge_g is the negated mean score") {
  CHECK(eval([](Tape& t) { return hinge_g(t.constant(scores({1, 3}))); }) == -2.0);
  CHECK(eval([](Tape& t) { return hinge_g(t.constant(scores({0, 0, 0}))); }) == 0.0);
}

TEST_CASE("l1_recon") {
  const Tensor gt({1, 3, 4, 4}, 0.5);
  CHECK(eval([&](Tape& t) { return l1_recon(t.constant(gt), t.constant(gt), t.constant(gt)); }) == 0.0);
  CHECK(eval([&](Tape& t) {
          return l1_recon(t.constant(gt), t.constant(gt), t.constant(Tensor({1, 3, 4, 4}, 0.25)));
        }) == 0.25);
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({2, 3, 5, 5}, rng), b = oracle::random_tensor({2, 3, 5, 5}, rng),
               c = oracle::random_tensor({2, 3, 5, 5}, rng);
  const double want = mean_abs_diff(a, b) + mean_abs_diff(a, c);
  CHECK(std::abs(eval([&](Tape& t) { return l1_recon(t.constant(a), t.constant(b), t.constant(c)); }) - want) < 1e-12);
  Tape t;
  CHECK_THROWS_AS(l1_recon(t.constant(a), t.constant(Tensor({1, 3, 5, 5})), t.constant(c)), Error);
}

TEST_CASE("perceptual loss") {
  FeatureBackbone b(small_backbone());
  std::mt19937_64 rng(2);
  const Tensor gt = oracle::random_tensor({2, 3, 8, 8}, rng), out = oracle::random_tensor({2, 3, 8, 8}, rng);
  CHECK(eval([&](Tape& t) { return perceptual(b, t.constant(gt), gt, {"block2"}); }) == 0.0);
  CHECK(std::abs(eval([&](Tape& t) { return perceptual(b, t.constant(out), gt, {"input"}); }) -
                 mean_abs_diff(out, gt)) < 1e-15);
  const auto fo = taps_oracle(b, out), fg = taps_oracle(b, gt);
  const double want = mean_abs_diff(fo.at("block1"), fg.at("block1")) + mean_abs_diff(fo.at("block2"), fg.at("block2"));
  CHECK(std::abs(eval([&](Tape& t) { return perceptual(b, t.constant(out), gt, {"block1", "block2"}); }) - want) <
        1e-10);
  Tape t;
  CHECK_THROWS_AS(perceptual(b, t.constant(out), gt, {"relu9_9"}), Error);
}

TEST_CASE("patch loss is the hole mean") {
  Tensor mask({1, 1, 1, 4});
  const Tensor gt({1, 1, 1, 4}, std::vector<double>{0.5, 0.5, 0.5, 0.5});
  const Tensor refined({1, 1, 1, 4}, std::vector<double>{0.4, 0.8, 0.0, 1.0});
  CHECK(eval([&](Tape& t) { return patch_loss(mask, gt, t.constant(refined)); }) == 0.0);
  mask[0] = mask[1] = 1.0;
  CHECK(eval([&](Tape& t) { return patch_loss(mask, gt, t.constant(refined)); }) == doctest::Approx(0.2).epsilon(1e-14));

  std::mt19937_64 rng(3);
  Tensor m({2, 1, 6, 6});
  for (double& v : m.data()) v = std::bernoulli_distribution(0.3)(rng) ? 1.0 : 0.0;
  const Tensor g = oracle::random_tensor({2, 3, 6, 6}, rng), r = oracle::random_tensor({2, 3, 6, 6}, rng);
  double sum = 0.0, count = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        if (m.at(n, 0, y, x) == 0.0) continue;
        count += 3;
        for (int c = 0; c < 3; ++c) sum += std::abs(g.at(n, c, y, x) - r.at(n, c, y, x));
      }
  CHECK(std::abs(eval([&](Tape& t) { return patch_loss(m, g, t.constant(r)); }) - sum / count) < 1e-12);
  Tape t;
  CHECK_THROWS_AS(patch_loss(Tensor({2, 1, 5, 6}), g, t.constant(r)), Error);
}

TEST_CASE("gram matrices") {
  Tensor f({1, 2, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) f.at(0, 0, y, x) = 1.0, f.at(0, 1, y, x) = 2.0;
  CHECK(gram(f) == std::vector<double>{0.5, 1.0, 1.0, 2.0});
  CHECK(gram(Tensor({1, 3, 4, 4})) == std::vector<double>(9, 0.0));
  std::mt19937_64 rng(4);
  const Tensor r = oracle::random_tensor({1, 5, 6, 7}, rng);
  const auto g = gram(r);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(g[static_cast<std::size_t>(i * 5 + j)] == g[static_cast<std::size_t>(j * 5 + i)]);
  const auto want = gram_oracle(r, 0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - want[i]) < 1e-14);
  CHECK_THROWS_AS(gram(Tensor({2, 1, 2, 2})), Error);
}

TEST_CASE("style loss") {
  std::mt19937_64 rng(5);
  FeatureBackbone b(small_backbone());
  const Tensor gt = oracle::random_tensor({2, 3, 8, 8}, rng), out = oracle::random_tensor({2, 3, 8, 8}, rng);
  CHECK(eval([&](Tape& t) { return style_loss(b, t.constant(gt), gt, {"block1", "block2"}); }) == 0.0);

  const auto fo = taps_oracle(b, out), fg = taps_oracle(b, gt);
  double want = 0.0;
  for (const char* tap : {"block1", "block2"}) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int n = 0; n < 2; ++n) {
      const auto go = gram_oracle(fo.at(tap), n), gg = gram_oracle(fg.at(tap), n);
      for (std::size_t i = 0; i < go.size(); ++i) acc += std::abs(go[i] - gg[i]);
      count += go.size();
    }
    want += acc / static_cast<double>(count);
  }
  CHECK(std::abs(eval([&](Tape& t) { return style_loss(b, t.constant(out), gt, {"block1", "block2"}); }) - want) <
        1e-10);

  // A pointwise backbone cannot see pixel positions.
  BackboneConfig pointwise;
  pointwise.channels = {4, 4};
  pointwise.kernel = 1;
  pointwise.downsample = false;
  FeatureBackbone p(pointwise);
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor shuffled(gt.shape());
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 64; ++i) shuffled.at(n, c, i / 8, i % 8) = gt.at(n, c, perm[i] / 8, perm[i] % 8);
  CHECK(eval([&](Tape& t) { return style_loss(p, t.constant(shuffled), gt, {"block1", "block2"}); }) < 1e-14);
}

TEST_CASE("default weights and the weighted total") {
  const LossWeights w;
  CHECK(w.as_array() == std::array<double, 5>{1.0, 100.0, 10.0, 1.0, 100.0});
  CHECK(total_loss(w, {1, 2, 3, 4, 5}).total == 735.0);
  CHECK(total_loss(w, std::array<double, 5>{0, 0, 0, 0, 0}).total == 0.0);
  LossWeights no_patch = w;
  ablate(no_patch, "patch");
  const LossReport r = total_loss(no_patch, {1, 2, 3, 4, 5});
  CHECK(r.total == 705.0);
  CHECK(r.components[2] == 3.0);
  CHECK_THROWS_AS(ablate(no_patch, "gan"), Error);
}

TEST_CASE("ablation rows exclude exactly one component and keep it logged") {
  const std::array<double, 5> comps{0.7, 0.11, 0.29, 0.013, 0.41};
  const double full = total_loss(LossWeights{}, comps).total;
  const char* names[] = {"hinge", "perceptual", "patch", "style", "l1"};
  for (std::size_t i = 0; i < 5; ++i) {
    LossWeights w;
    ablate(w, names[i]);
    const LossReport r = total_loss(w, comps);
    CHECK(r.components == comps);
    CHECK(r.total == doctest::Approx(full - LossWeights{}.as_array()[i] * comps[i]).epsilon(1e-14));
  }
}

TEST_CASE("total loss is linear in each weight") {
  const std::array<double, 5> comps{0.3, 0.2, 0.7, 0.05, 0.9};
  auto only = [](std::size_t i, double v) {
    std::array<double, 5> w{};
    w[i] = v;
    return LossWeights{w[0], w[1], w[2], w[3], w[4]};
  };
  for (std::size_t i = 0; i < 5; ++i) CHECK(total_loss(only(i, 6.0), comps).total == 2.0 * total_loss(only(i, 3.0), comps).total);
}

TEST_CASE("non-finite components are attributed") {
  try {
    total_loss(LossWeights{}, {0.1, std::nan(""), 0.0, 0.0, 0.0});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("perceptual") != std::string::npos);
  }
}

TEST_CASE("losses vanish at out = gt and are nonnegative otherwise") {
  std::mt19937_64 rng(6);
  FeatureBackbone b(small_backbone());
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor gt = oracle::random_tensor({1, 3, 8, 8}, rng), out = oracle::random_tensor({1, 3, 8, 8}, rng);
    Tensor m({1, 1, 8, 8});
    for (double& v : m.data()) v = std::bernoulli_distribution(0.4)(rng) ? 1.0 : 0.0;
    Tape t;
    Var g = t.constant(gt), o = t.constant(out);
    CHECK(l1_recon(g, g, g).value().item() == 0.0);
    CHECK(patch_loss(m, gt, g).value().item() == 0.0);
    CHECK(perceptual(b, g, gt, {"block2"}).value().item() == 0.0);
    CHECK(style_loss(b, g, gt, {"block1", "block2"}).value().item() == 0.0);
    CHECK(l1_recon(g, o, o).value().item() >= 0.0);
    CHECK(patch_loss(m, gt, o).value().item() >= 0.0);
    CHECK(perceptual(b, o, gt, {"block2"}).value().item() >= 0.0);
    CHECK(style_loss(b, o, gt, {"block1", "block2"}).value().item() >= 0.0);
    CHECK(hinge_d(o, o).value().item() >= 0.0);
  }
}

TEST_CASE("backbone is seed-deterministic and frozen") {
  FeatureBackbone a(small_backbone()), b(small_backbone());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i]->value.to_vector() == b.params()[i]->value.to_vector());
  std::mt19937_64 rng(7);
  Parameter out("out", oracle::random_tensor({1, 3, 8, 8}, rng));
  const Tensor gt = oracle::random_tensor({1, 3, 8, 8}, rng);
  Tape t;
  t.backward(perceptual(a, t.leaf(out), gt, {"block2"}));
  for (Parameter* p : a.params())
    for (double g : p->grad.data()) REQUIRE(g == 0.0);
  CHECK(a.features(gt, {"block1"}).at("block1").shape() == Shape{1, 4, 8, 8});
  CHECK(a.features(gt, {"block2"}).at("block2").shape() == Shape{1, 6, 4, 4});
}

TEST_CASE("feature losses pass the gradient check") {
  std::mt19937_64 rng(8);
  FeatureBackbone b(small_backbone());
  Parameter out("out", oracle::random_tensor({1, 3, 8, 8}, rng));
  const Tensor gt = oracle::random_tensor({1, 3, 8, 8}, rng);
  Parameter* params[] = {&out};
  CHECK(finite_diff_check([&](Tape& t) { return perceptual(b, t.leaf(out), gt, {"block1", "block2"}); }, params)
            .max_rel_error < 1e-4);
  CHECK(finite_diff_check([&](Tape& t) { return style_loss(b, t.leaf(out), gt, {"block1", "block2"}); }, params)
            .max_rel_error < 1e-4);
  CHECK(finite_diff_check([&](Tape& t) { return hinge_g(t.leaf(out)); }, params).max_rel_error < 1e-4);
}

}  // TEST_SUITE
