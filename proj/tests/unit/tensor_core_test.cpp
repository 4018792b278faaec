// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "amodal/error.hpp"
#include "amodal/gradcheck.hpp"
#include "amodal/ops.hpp"
#include "oracles.hpp"

using namespace amodal;

namespace {

Tensor from(Shape s, std::vector<double> v) { return Tensor(s, std::move(v)); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an amodal::Error");
  return ErrorKind::kUsage;
}

}  // namespace

TEST_SUITE("tensor-core") {

TEST_CASE("conv2d scalar kernel scales the input") {
  const Tensor y = conv2d_forward(from({1, 1, 2, 2}, {1, 2, 3, 4}), from({1, 1, 1, 1}, {2}), std::vector<double>{0.0}, {});
  CHECK(y.to_vector() == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("conv2d all-ones 3x3 with padding counts neighbours") {
  const Tensor y = conv2d_forward(Tensor({1, 1, 3, 3}, 1.0), Tensor({1, 1, 3, 3}, 1.0), {}, {1, 1, 1});
  CHECK(y.at(0, 0, 1, 1) == 9.0);
  for (auto [r, c] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}}) CHECK(y.at(0, 0, r, c) == 6.0);
  for (auto [r, c] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) CHECK(y.at(0, 0, r, c) == 4.0);
}

TEST_CASE("conv2d stride 2 against the direct sum") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng);
  const Tensor w = oracle::random_tensor({2, 2, 3, 3}, rng);
  const Tensor y = conv2d_forward(x, w, {}, {2, 1, 1});
  CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, w, {}, 2, 1, 1)) < 1e-12);
}

TEST_CASE("conv2d matches the quadruple-loop oracle on 50 random configurations") {
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = pick(1, 2), c = pick(1, 4), o = pick(1, 5);
    const int k = 2 * pick(0, 2) + 1;
    const int stride = pick(1, 3), dil = pick(1, 2), pad = pick(0, 3);
    const int extent = dil * (k - 1) + 1;
    const int h = pick(std::max(1, extent - 2 * pad), 9), w = pick(std::max(1, extent - 2 * pad), 9);
    const Tensor x = oracle::random_tensor({n, c, h, w}, rng);
    const Tensor wt = oracle::random_tensor({o, c, k, k}, rng);
    std::vector<double> bias(static_cast<std::size_t>(o));
    for (auto& b : bias) b = std::uniform_real_distribution<double>(-1, 1)(rng);
    const Tensor got = conv2d_forward(x, wt, bias, {stride, pad, dil});
    const Tensor want = oracle::conv2d(x, wt, bias, stride, pad, dil);
    REQUIRE(got.shape() == want.shape());
    worst = std::max(worst, oracle::max_abs_diff(got, want));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = oracle::random_tensor({2, 3, 7, 6}, rng);
    const Tensor y = oracle::random_tensor({2, 3, 7, 6}, rng);
    const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
    const double a = 1.7, b = -0.6;
    Tensor mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const ConvSpec spec{1, 2, 2};
    const Tensor lhs = conv2d_forward(mix, w, {}, spec);
    const Tensor cx = conv2d_forward(x, w, {}, spec), cy = conv2d_forward(y, w, {}, spec);
    double worst = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, std::abs(lhs[i] - (a * cx[i] + b * cy[i])));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("conv2d rejects even kernels and channel mismatch") {
  CHECK(kind_of([] { conv2d_forward(Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), {}, {}); }) == ErrorKind::kShape);
  CHECK(kind_of([] { conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 1, 3, 3}), {}, {}); }) == ErrorKind::kShape);
}

TEST_CASE("activation values") {
  CHECK(activate(Activation::kSigmoid, 0.0) == 0.5);
  CHECK(activate(Activation::kRelu, -3.0) == 0.0);
  CHECK(activate(Activation::kRelu, 3.0) == 3.0);
  CHECK(activate(Activation::kIdentity, -2.5) == -2.5);
  CHECK(activate(Activation::kElu, -1.0) == doctest::Approx(std::expm1(-1.0)).epsilon(1e-15));
  CHECK(activate(Activation::kTanh, 0.3) == doctest::Approx(std::tanh(0.3)).epsilon(1e-15));
  CHECK(kind_of([] { parse_activation("swish"); }) == ErrorKind::kUsage);
  for (auto a : {Activation::kElu, Activation::kRelu, Activation::kLeakyRelu, Activation::kSigmoid, Activation::kTanh,
                 Activation::kIdentity})
    CHECK(parse_activation(activation_name(a)) == a);
}

TEST_CASE("elu derivative matches central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  const double eps = 1e-6;
  for (int i = 0; i < 200; ++i) {
    double x = d(rng);
    if (std::abs(x) < 1e-3) x += 0.01;
    const double y = activate(Activation::kElu, x);
    const double numeric = (activate(Activation::kElu, x + eps) - activate(Activation::kElu, x - eps)) / (2 * eps);
    CHECK(std::abs(activate_derivative(Activation::kElu, x, y) - numeric) < 1e-6);
  }
}

TEST_CASE("resample modes") {
  const Tensor up = resample_forward(from({1, 1, 1, 1}, {5}), Resample::kNearestUp2);
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  CHECK(up.to_vector() == std::vector<double>{5, 5, 5, 5});
  CHECK(resample_forward(from({1, 1, 2, 2}, {1, 3, 5, 7}), Resample::kAvgDown2)[0] == 4.0);
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({2, 3, 5, 4}, rng);
  const Tensor back = resample_forward(resample_forward(x, Resample::kNearestUp2), Resample::kAvgDown2);
  CHECK(oracle::max_abs_diff(back, x) < 1e-12);
  CHECK(kind_of([] { resample_forward(Tensor({1, 1, 3, 2}), Resample::kAvgDown2); }) == ErrorKind::kShape);
}

TEST_CASE("backward on simple expressions") {
  std::mt19937_64 rng(1);
  {
    Tape tape;
    Var x = tape.variable(oracle::random_tensor({1, 2, 3, 3}, rng));
    tape.backward(ops::sum(ops::scale(x, 2.0)));
    for (double g : tape.grad(x).data()) CHECK(g == 2.0);
  }
  {
    Tape tape;
    Var x = tape.variable(Tensor::scalar(3.0));
    tape.backward(ops::sum(ops::mul(x, x)));
    CHECK(tape.grad(x).item() == 6.0);
  }
}

TEST_CASE("backward errors") {
  Tape tape;
  Var x = tape.variable(Tensor({1, 1, 2, 2}, 1.0));
  CHECK(kind_of([&] { tape.backward(ops::scale(x, 2.0)); }) == ErrorKind::kShape);
  Var c = tape.constant(Tensor::scalar(1.0));
  CHECK(kind_of([&] { tape.backward(ops::scale(c, 2.0)); }) == ErrorKind::kUsage);
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  Parameter p("p", Tensor({1, 1, 1, 2}, 1.5));
  for (int round = 1; round <= 3; ++round) {
    Tape tape;
    tape.backward(ops::sum(ops::scale(tape.leaf(p), 3.0)));
    CHECK(p.grad[0] == 3.0 * round);
  }
  p.zero_grad();
  CHECK(p.grad[1] == 0.0);
}

TEST_CASE("backward visits each node once in reverse creation order") {
  // A diamond: y = x*x + x*x shares x; a double visit would double the gradient.
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  Var sq = ops::mul(x, x);
  tape.backward(ops::sum(ops::add(sq, sq)));
  CHECK(tape.grad(x).item() == 8.0);
}

TEST_CASE("finite_diff_check tiny cases") {
  Parameter p("x", Tensor::scalar(1.0));
  Parameter* params[] = {&p};
  const auto quad = finite_diff_check([&](Tape& t) { Var x = t.leaf(p); return ops::sum(ops::mul(x, x)); }, params);
  CHECK(quad.max_rel_error < 1e-8);
  const auto lin = finite_diff_check([&](Tape& t) { return ops::sum(ops::affine(t.leaf(p), 4.0, 1.0)); }, params);
  CHECK(lin.max_rel_error < 1e-9);
}

TEST_CASE("every differentiable op passes the gradient check on random shapes") {
  std::mt19937_64 rng(99);
  Parameter a("a", oracle::random_tensor({2, 3, 4, 4}, rng));
  Parameter b("b", oracle::random_tensor({2, 3, 4, 4}, rng));
  Parameter w("w", oracle::random_tensor({2, 3, 3, 3}, rng));
  Parameter bias("bias", oracle::random_tensor({1, 1, 1, 2}, rng));
  Parameter* params[] = {&a, &b, &w, &bias};
  const Tensor probe = oracle::random_tensor({2, 2, 2, 2}, rng);

  const Tensor mix = oracle::random_tensor({1, 6, 1, 1}, rng);

  auto check = [&](const std::string& label, const LossBuilder& f) {
    const auto r = finite_diff_check(f, params);
    INFO(label << " worst " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  };
  check("conv2d", [&](Tape& t) {
    Var y = ops::conv2d(t.leaf(a), t.leaf(w), t.leaf(bias), {2, 1, 1});
    return ops::sum(ops::mul(y, t.constant(probe)));
  });
  for (auto act : {Activation::kElu, Activation::kRelu, Activation::kLeakyRelu, Activation::kSigmoid,
                   Activation::kTanh, Activation::kIdentity})
    check(std::string(activation_name(act)),
          [&](Tape& t) { return ops::sum(ops::mul(ops::activation(act, t.leaf(a)), t.leaf(b))); });
  check("resample", [&](Tape& t) {
    Var up = ops::resample(t.leaf(a), Resample::kNearestUp2);
    Var down = ops::resample(ops::mul(up, up), Resample::kAvgDown2);
    return ops::mean(ops::mul(down, t.leaf(b)));
  });
  check("elementwise", [&](Tape& t) {
    Var x = t.leaf(a), y = t.leaf(b);
    Var e = ops::add(ops::sub(ops::mul(x, y), ops::scale(x, 0.3)), ops::affine(y, -2.0, 0.5));
    return ops::mean(ops::abs(ops::affine(e, 1.0, 5.0)));
  });
  check("concat", [&](Tape& t) {
    Var cat = ops::concat_channels(t.leaf(a), t.leaf(b));
    Var y = ops::conv2d(cat, t.constant(mix), t.constant(Tensor({1, 1, 1, 1})), {});
    return ops::sum(ops::mul(y, y));
  });
}

TEST_CASE("the backward fault hook is caught by the gradient check") {
  std::mt19937_64 rng(4);
  Parameter a("a", oracle::random_tensor({1, 2, 3, 3}, rng));
  Parameter* params[] = {&a};
  auto f = [&](Tape& t) { return ops::sum(ops::activation(Activation::kSigmoid, t.leaf(a))); };
  CHECK(finite_diff_check(f, params).max_rel_error < 1e-4);
  testing::set_backward_fault(true);
  const double faulty = finite_diff_check(f, params).max_rel_error;
  testing::set_backward_fault(false);
  // The hook scales the derivative by 1.01, an error of at most 0.25 * 0.01.
  CHECK(faulty > 1e-3);
}

}  // TEST_SUITE
