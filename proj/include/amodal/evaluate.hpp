// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "amodal/image_io.hpp"
#include "amodal/mask.hpp"
#include "amodal/metrics.hpp"
#include "amodal/network.hpp"

namespace amodal {

/// Output source for evaluation.
enum class EvalSource {
  kGenerator,  // composited generator output
  kIdentity,   // ground truth passed through unchanged
  kMaskedInput // the grey-hole network input, the masked baseline
};

struct EvalOptions {
  bool hole_region = false;  // restrict metrics to the occluded pixels
  std::string panel_dir;     // when set, writes gt | weighted mask | masked | output panels
  int batch = 8;
};

/// Grey-hole input in [0,1]: gt off the hole, 0.5 on it.
Tensor masked_input(const CompositeSample& sample);

/// Composited outputs in [0,1], one 1x3xHxW tensor per sample.
std::vector<Tensor> complete_samples(Generator& generator, const std::vector<CompositeSample>& samples, int batch = 8);

/// Side-by-side row of four HxW tiles.
Image8 make_panel(const CompositeSample& sample, const Tensor& output);

MetricReport evaluate_samples(const std::vector<CompositeSample>& samples, const std::vector<std::string>& ids,
                              EvalSource source, Generator* generator, const EvalOptions& options);

/// Completes one image. `levels` holds 0 hidden / 0.5 context / 1 visible at
/// the image extents; both are resampled to the model resolution.
Tensor complete_image(Generator& generator, const Tensor& image01, const WeightedMask& levels);

/// Grey levels to weighted-mask values: < 64 hidden, >= 192 visible, else context.
WeightedMask weighted_from_image(const Image8& mask);

}  // namespace amodal
