// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "amodal/error.hpp"
#include "amodal/network.hpp"

namespace amodal {

namespace {

constexpr int kKernel = 5;
constexpr int kDiscInput = 4;  // image + mask channel

std::vector<double> power_right_vector(const Tensor& w, const std::vector<double>& u) {
  const std::size_t rows = u.size();
  const std::size_t cols = w.size() / rows;
  std::vector<double> v(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) v[c] += w[r * cols + c] * u[r];
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::max(std::sqrt(norm), 1e-12);
  for (double& x : v) x /= norm;
  return v;
}

bool all_zero(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
}

}  // namespace

Discriminator::Discriminator(const ModelConfig& config) {
  require(!config.disc_channels.empty(), ErrorKind::kUsage, "discriminator needs at least one layer");
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  int in_c = kDiscInput;
  for (std::size_t i = 0; i < config.disc_channels.size(); ++i) {
    const int out_c = config.disc_channels[i];
    SpectralConvLayer layer;
    layer.conv = ConvLayer::create("disc." + std::to_string(i), in_c, out_c, kKernel, {2, kKernel / 2, 1},
                                   std::sqrt(2.0 / (in_c * kKernel * kKernel)), rng);
    layer.state = init_spectral_state(out_c, rng);
    layers_.push_back(std::move(layer));
    in_c = out_c;
  }
}

std::vector<Parameter*> Discriminator::params() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (Parameter* p : l.conv.params()) out.push_back(p);
  return out;
}

void Discriminator::advance_power() {
  for (auto& l : layers_)
    if (!all_zero(l.conv.weight.value)) (void)spectral_normalize(l.conv.weight.value, l.state, 1);
}

Var Discriminator::forward(Tape& tape, Var image, Var mask_channel, bool track, bool update_power) {
  require(image.shape().c == 3 && mask_channel.shape().c == 1, ErrorKind::kShape,
          "discriminator: expects 3 image channels and 1 mask channel");
  Var x = ops::concat_channels(image, mask_channel);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    SpectralConvLayer& l = layers_[i];
    Var w = bind(tape, l.conv.weight, track);
    // An all-zero filter bank has no spectrum to normalize and already yields zeros.
    if (!all_zero(l.conv.weight.value)) {
      std::vector<double> v;
      if (update_power) {
        v = spectral_normalize(l.conv.weight.value, l.state, 1).v;
      } else {
        v = power_right_vector(l.conv.weight.value, l.state.u);
      }
      w = spectral_normalized(w, l.state.u, v);
    }
    x = ops::conv2d(x, w, bind(tape, l.conv.bias, track), l.conv.spec);
    if (i + 1 < layers_.size()) x = ops::activation(Activation::kLeakyRelu, x);
  }
  return x;
}

}  // namespace amodal
