// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "amodal/mask.hpp"
#include "amodal/tensor.hpp"

namespace amodal {

struct ErrorPair {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Mean absolute and mean squared error. Optional region restricts to pixels set in the mask.
ErrorPair l1_l2_error(const Tensor& gt, const Tensor& out, const BinaryMask* region = nullptr);

/// 10 log10(peak^2 / mse); +infinity when mse is 0.
double psnr_from_mse(double mse, double peak = 1.0);
double psnr(const Tensor& gt, const Tensor& out, double peak = 1.0, const BinaryMask* region = nullptr);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over every fully-contained Gaussian window, averaged over
/// batch and channels. With a region, only windows centred inside it count
/// (falling back to all windows when none is).
double ssim(const Tensor& gt, const Tensor& out, const SsimOptions& opts = {}, const BinaryMask* region = nullptr);

struct SampleMetrics {
  std::string id;
  double l1 = 0.0;
  double l2 = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  SampleMetrics mean;  // arithmetic mean of the per-sample rows

  void add(SampleMetrics m);
  void finalize();
};

SampleMetrics evaluate_pair(const std::string& id, const Tensor& gt, const Tensor& out,
                            const BinaryMask* region = nullptr);

/// One JSON object per line; psnr of identical images is written as "inf".
std::string format_metric_record(const SampleMetrics& m, bool aggregate, std::size_t count = 0);

}  // namespace amodal
