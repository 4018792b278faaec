// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>

#include "amodal/autograd.hpp"
#include "amodal/tensor.hpp"

namespace amodal {

struct ConvSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

enum class Activation { kElu, kRelu, kLeakyRelu, kSigmoid, kTanh, kIdentity };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

enum class Resample { kNearestUp2, kAvgDown2 };

/// Output extent of a zero-padded convolution along one axis.
int conv_out_extent(int in, int kernel, const ConvSpec& spec);

// Untracked kernels. All take and return dense (n, c, h, w) tensors.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, std::span<const double> bias, const ConvSpec& spec);
double activate(Activation a, double x);
double activate_derivative(Activation a, double x, double y);
Tensor resample_forward(const Tensor& input, Resample mode);

namespace ops {

Var conv2d(Var input, Var weight, Var bias, const ConvSpec& spec);
Var activation(Activation kind, Var input);
Var resample(Var input, Resample mode);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a * x + b elementwise.
Var affine(Var x, double a, double b);
Var abs(Var a);
Var concat_channels(Var a, Var b);

/// Scalar reductions, shape 1x1x1x1.
Var sum(Var a);
Var mean(Var a);
/// sum_i w_i * x_i over scalar inputs.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

}  // namespace ops

namespace testing {
/// Negative-control hook: corrupts the sigmoid derivative so gradient audits must fail.
void set_backward_fault(bool enabled);
bool backward_fault();
}  // namespace testing

}  // namespace amodal
