// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "amodal/autograd.hpp"
#include "amodal/network.hpp"

namespace amodal {

// Feature backbone -----------------------------------------------------------

struct BackboneConfig {
  std::vector<int> channels{8, 16, 32, 32};
  int kernel = 3;
  bool downsample = true;  // avg-down between blocks
  std::uint64_t seed = 99;
};

/// Frozen random conv stack standing in for pre-trained classification
/// features. Taps are "input" (the image itself) and "block1".."blockN"
/// (post-relu output of each block, before the following downsample).
class FeatureBackbone {
 public:
  FeatureBackbone() = default;
  explicit FeatureBackbone(const BackboneConfig& config);

  std::map<std::string, Var> forward(Var image, const std::vector<std::string>& taps);
  std::map<std::string, Tensor> features(const Tensor& image, const std::vector<std::string>& taps);

  bool has_tap(const std::string& name) const;
  int tap_channels(const std::string& name) const;
  std::vector<Parameter*> params();
  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  std::vector<ConvLayer> blocks_;
};

// Loss terms -----------------------------------------------------------------

/// mean(relu(1 - real)) + mean(relu(1 + fake)).
Var hinge_d(Var real_scores, Var fake_scores);
/// -mean(fake).
Var hinge_g(Var fake_scores);
/// mean|gt - coarse| + mean|gt - refined|.
Var l1_recon(Var gt, Var coarse, Var refined);
/// Sum over taps of mean|features(out) - features(gt)|.
Var perceptual(FeatureBackbone& backbone, Var out, const Tensor& gt, const std::vector<std::string>& taps);
/// sum|M * (gt - refined)| / (|M| * channels); 0 for an empty mask. mask is n x 1 x h x w.
Var patch_loss(const Tensor& mask, const Tensor& gt, Var refined);

/// Normalized Gram matrix of a single-sample feature map: F F^T / (C * h * w), C x C row-major.
std::vector<double> gram(const Tensor& features);
/// Batched tracked Gram, output n x 1 x C x C.
Var gram_batched(Var features);
/// Sum over taps of mean|gram(out) - gram(gt)|, per-sample Grams.
Var style_loss(FeatureBackbone& backbone, Var out, const Tensor& gt, const std::vector<std::string>& taps);

// Combination ----------------------------------------------------------------

struct LossWeights {
  double hinge = 1.0;
  double perceptual = 100.0;
  double patch = 10.0;
  double style = 1.0;
  double l1 = 100.0;

  std::array<double, 5> as_array() const { return {hinge, perceptual, patch, style, l1}; }
};

inline constexpr std::array<const char*, 5> kComponentNames{"hinge_g", "perceptual", "patch", "style", "l1"};

struct LossReport {
  std::array<double, 5> components{};  // unweighted, order of kComponentNames
  double total = 0.0;
};

/// lambda-weighted sum; a zero weight drops its term entirely. Non-finite
/// components raise a numeric error naming the component.
LossReport total_loss(const LossWeights& weights, const std::array<double, 5>& components);
/// Tracked counterpart over scalar component Vars.
Var total_loss(const LossWeights& weights, const std::array<Var, 5>& components);

/// Maps ablation names (hinge, perceptual, patch, style, l1) to a zeroed weight.
void ablate(LossWeights& weights, const std::string& term);

}  // namespace amodal
