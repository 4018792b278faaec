// SPDX-License-Identifier: Apache-2.0
#include "amodal/metrics.hpp"

#include <cmath>
#include <limits>
#include "json.hpp"

#include "amodal/error.hpp"

namespace amodal {

namespace {

void require_pair(const Tensor& gt, const Tensor& out, const BinaryMask* region) {
  require(gt.shape() == out.shape(), ErrorKind::kShape,
          "metrics: shape mismatch " + gt.shape().str() + " vs " + out.shape().str());
  if (region)
    require(region->height() == gt.shape().h && region->width() == gt.shape().w, ErrorKind::kShape,
            "metrics: region extents mismatch");
}

std::vector<double> gaussian_window(const SsimOptions& o) {
  std::vector<double> g(static_cast<std::size_t>(o.window));
  const double centre = (o.window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < o.window; ++i) {
    const double d = i - centre;
    g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * o.sigma * o.sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= total;
  return g;
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

ErrorPair l1_l2_error(const Tensor& gt, const Tensor& out, const BinaryMask* region) {
  require_pair(gt, out, region);
  const Shape& s = gt.shape();
  double l1 = 0.0, l2 = 0.0, count = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          if (region && !region->get(y, x)) continue;
          const double d = gt.at(n, c, y, x) - out.at(n, c, y, x);
          l1 += std::fabs(d);
          l2 += d * d;
          count += 1.0;
        }
  if (count == 0.0) return {};
  return {l1 / count, l2 / count};
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Tensor& gt, const Tensor& out, double peak, const BinaryMask* region) {
  return psnr_from_mse(l1_l2_error(gt, out, region).l2, peak);
}

double ssim(const Tensor& gt, const Tensor& out, const SsimOptions& o, const BinaryMask* region) {
  require_pair(gt, out, region);
  const Shape& s = gt.shape();
  require(s.h >= o.window && s.w >= o.window, ErrorKind::kShape,
          "ssim: image " + s.str() + " smaller than window " + std::to_string(o.window));
  const auto g = gaussian_window(o);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const int oh = s.h - o.window + 1, ow = s.w - o.window + 1;
  const int half = o.window / 2;

  bool use_region = false;
  if (region) {
    for (int y = 0; y < oh && !use_region; ++y)
      for (int x = 0; x < ow && !use_region; ++x) use_region = region->get(y + half, x + half);
  }

  double total = 0.0, count = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          if (use_region && !region->get(y + half, x + half)) continue;
          double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
          for (int i = 0; i < o.window; ++i)
            for (int j = 0; j < o.window; ++j) {
              const double w = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
              const double a = gt.at(n, c, y + i, x + j), b = out.at(n, c, y + i, x + j);
              mx += w * a, my += w * b;
              sxx += w * a * a, syy += w * b * b, sxy += w * a * b;
            }
          const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
          total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
          count += 1.0;
        }
  return total / count;
}

void MetricReport::add(SampleMetrics m) { samples.push_back(std::move(m)); }

void MetricReport::finalize() {
  mean = SampleMetrics{"aggregate"};
  if (samples.empty()) return;
  for (const auto& m : samples) {
    mean.l1 += m.l1, mean.l2 += m.l2, mean.psnr_db += m.psnr_db, mean.ssim += m.ssim;
  }
  const double n = static_cast<double>(samples.size());
  mean.l1 /= n, mean.l2 /= n, mean.psnr_db /= n, mean.ssim /= n;
}

SampleMetrics evaluate_pair(const std::string& id, const Tensor& gt, const Tensor& out, const BinaryMask* region) {
  SampleMetrics m;
  m.id = id;
  const ErrorPair e = l1_l2_error(gt, out, region);
  m.l1 = e.l1;
  m.l2 = e.l2;
  m.psnr_db = psnr_from_mse(e.l2);
  m.ssim = ssim(gt, out, {}, region);
  return m;
}

std::string format_metric_record(const SampleMetrics& m, bool aggregate, std::size_t count) {
  std::string out = "{";
  if (aggregate) {
    out += "\"aggregate\":true,\"count\":" + std::to_string(count);
  } else {
    out += "\"id\":" + nlohmann::json(m.id).dump();
  }
  out += ",\"l1\":" + number(m.l1) + ",\"l2\":" + number(m.l2) + ",\"psnr\":" + number(m.psnr_db) +
         ",\"ssim\":" + number(m.ssim) + "}";
  return out;
}

}  // namespace amodal
