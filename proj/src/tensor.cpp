// SPDX-License-Identifier: Apache-2.0
#include "amodal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "amodal/error.hpp"

namespace amodal {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0, ErrorKind::kShape,
          "negative tensor extent " + shape.str());
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(data.begin(), data.end()) {
  require(data_.size() == shape.numel(), ErrorKind::kShape,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorKind::kShape, "item() on non-scalar tensor " + shape_.str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_batch(int start, int count) const {
  require(start >= 0 && count >= 0 && start + count <= shape_.n, ErrorKind::kShape, "batch slice out of range");
  Shape s = shape_;
  s.n = count;
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(start * per),
                          data_.begin() + static_cast<std::ptrdiff_t>((start + count) * per));
  return Tensor(s, std::move(out));
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) fail(ErrorKind::kNumeric, "non-finite value produced by " + what);
}

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor stack_batch(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::kShape, "stack_batch of nothing");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    require(p.shape().c == s.c && p.shape().h == s.h && p.shape().w == s.w, ErrorKind::kShape,
            "stack_batch extent mismatch " + p.shape().str() + " vs " + s.str());
    total += p.shape().n;
  }
  s.n = total;
  Tensor out(s);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.size();
  }
  return out;
}

}  // namespace amodal
