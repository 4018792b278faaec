// SPDX-License-Identifier: Apache-2.0
#include "amodal/evaluate.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "amodal/error.hpp"
#include "amodal/trainer.hpp"

namespace amodal {

Tensor masked_input(const CompositeSample& sample) {
  Tensor out = sample.gt_image;
  for (int y = 0; y < sample.height(); ++y)
    for (int x = 0; x < sample.width(); ++x)
      if (sample.occluded.get(y, x))
        for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = 0.5;
  return out;
}

std::vector<Tensor> complete_samples(Generator& generator, const std::vector<CompositeSample>& samples, int batch) {
  require(batch >= 1, ErrorKind::kUsage, "evaluation batch must be >= 1");
  std::vector<Tensor> out;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min(samples.size() - start, static_cast<std::size_t>(batch));
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(samples, idx);
    Tape tape;
    const Tensor composited = from_network(generator.forward(tape, b.erased, b.weighted, false).composited.value());
    for (std::size_t i = 0; i < count; ++i) out.push_back(composited.slice_batch(static_cast<int>(i), 1));
  }
  return out;
}

Image8 make_panel(const CompositeSample& sample, const Tensor& output) {
  const int h = sample.height(), w = sample.width();
  Image8 panel{4 * w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(4 * w) * h * 3)};
  const Image8 gt = tensor_to_image(sample.gt_image);
  const Image8 masked = tensor_to_image(masked_input(sample));
  const Image8 out = tensor_to_image(output);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto level = static_cast<std::uint8_t>(std::lround(sample.weighted.get(y, x) * 255.0));
      for (int c = 0; c < 3; ++c) {
        panel.at(y, x, c) = gt.at(y, x, c);
        panel.at(y, w + x, c) = level;
        panel.at(y, 2 * w + x, c) = masked.at(y, x, c);
        panel.at(y, 3 * w + x, c) = out.at(y, x, c);
      }
    }
  return panel;
}

MetricReport evaluate_samples(const std::vector<CompositeSample>& samples, const std::vector<std::string>& ids,
                              EvalSource source, Generator* generator, const EvalOptions& options) {
  require(ids.size() == samples.size(), ErrorKind::kUsage, "evaluate: one id per sample required");
  std::vector<Tensor> outputs;
  switch (source) {
    case EvalSource::kGenerator:
      require(generator != nullptr, ErrorKind::kUsage, "evaluate: generator source needs a model");
      outputs = complete_samples(*generator, samples, options.batch);
      break;
    case EvalSource::kIdentity:
      for (const auto& s : samples) outputs.push_back(s.gt_image);
      break;
    case EvalSource::kMaskedInput:
      for (const auto& s : samples) outputs.push_back(masked_input(s));
      break;
  }
  if (!options.panel_dir.empty()) std::filesystem::create_directories(options.panel_dir);
  MetricReport report;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const BinaryMask* region = options.hole_region ? &samples[i].occluded : nullptr;
    report.add(evaluate_pair(ids[i], samples[i].gt_image, outputs[i], region));
    if (!options.panel_dir.empty())
      write_png((std::filesystem::path(options.panel_dir) / ("panel_" + ids[i] + ".png")).string(),
                make_panel(samples[i], outputs[i]));
  }
  report.finalize();
  return report;
}

WeightedMask weighted_from_image(const Image8& mask) {
  WeightedMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const int v = mask.at(y, x, 0);
      out.set(y, x, v < 64 ? WeightedMask::kHidden : (v >= 192 ? WeightedMask::kVisible : WeightedMask::kContext));
    }
  return out;
}

Tensor complete_image(Generator& generator, const Tensor& image01, const WeightedMask& levels) {
  const Shape& s = image01.shape();
  require(s.n == 1 && s.c == 3, ErrorKind::kShape, "complete: expects one RGB image");
  require(levels.height() == s.h && levels.width() == s.w, ErrorKind::kShape, "complete: mask extents differ from image");
  const int r = generator.config().resolution;
  const Tensor image = (s.h == r && s.w == r) ? image01 : resize_bilinear(image01, r, r);
  Tensor weighted({1, 1, r, r});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x)
      weighted.at(0, 0, y, x) = levels.get(std::min(s.h - 1, y * s.h / r), std::min(s.w - 1, x * s.w / r));
  Tensor erased({1, 3, r, r});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        erased.at(0, c, y, x) = weighted.at(0, 0, y, x) == WeightedMask::kHidden ? 0.0 : 2.0 * image.at(0, c, y, x) - 1.0;
  Tape tape;
  return from_network(generator.forward(tape, erased, weighted, false).composited.value());
}

}  // namespace amodal
