// SPDX-License-Identifier: Apache-2.0
// Straight-from-definition reference implementations shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/SVD>
#include <algorithm>

#include "amodal/mask.hpp"
#include "amodal/ops.hpp"
#include "amodal/tensor.hpp"

namespace oracle {

inline amodal::Tensor conv2d(const amodal::Tensor& x, const amodal::Tensor& w, const std::vector<double>& bias,
                             int stride, int pad, int dil) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int oh = (xs.h + 2 * pad - dil * (ws.h - 1) - 1) / stride + 1;
  const int ow = (xs.w + 2 * pad - dil * (ws.w - 1) - 1) / stride + 1;
  amodal::Tensor y({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int sy = i * stride - pad + ky * dil;
                const int sx = j * stride - pad + kx * dil;
                if (sy < 0 || sy >= xs.h || sx < 0 || sx >= xs.w) continue;
                acc += w.at(o, c, ky, kx) * x.at(n, c, sy, sx);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double elu(double v) { return v > 0 ? v : std::expm1(v); }

inline double max_abs_diff(const amodal::Tensor& a, const amodal::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline amodal::Tensor random_tensor(amodal::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return amodal::uniform(s, rng, lo, hi);
}

using namespace amodal;

inline BinaryMask random_blob(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(size * 0.25, size * 0.75), r(size * 0.12, size * 0.35);
  const double cy = c(rng), cx = c(rng), ry = r(rng), rx = r(rng);
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (y + 0.5 - cy) / ry, v = (x + 0.5 - cx) / rx;
      m.set(y, x, u * u + v * v <= 1.0);
    }
  if (m.empty()) m.set(static_cast<int>(cy), static_cast<int>(cx), true);
  return m;
}

inline ObjectCrop crop_of(const BinaryMask& m, std::mt19937_64& rng, std::int64_t id) {
  ObjectCrop c;
  c.mask = m;
  c.id = id;
  c.image = uniform({1, 3, m.height(), m.width()}, rng, 0.05, 1.0);
  return c;
}

// Set equalities and image invariants checked pixel by pixel, independent of check_invariants.
inline bool sample_exact(const CompositeSample& s) {
  std::size_t zeros = 0, ones = 0, halves = 0;
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) {
      const double w = s.weighted.get(y, x);
      if (!((w == 0.0) == s.occluded.get(y, x))) return false;
      if (!((w == 1.0) == s.visible.get(y, x))) return false;
      if (!((w == 0.5) == (!s.occluded.get(y, x) && !s.visible.get(y, x)))) return false;
      if (!(s.amodal.get(y, x) == (s.occluded.get(y, x) || s.visible.get(y, x)))) return false;
      zeros += w == 0.0, ones += w == 1.0, halves += w == 0.5;
      for (int c = 0; c < 3; ++c) {
        const double want = s.occluded.get(y, x) ? 0.0 : s.gt_image.at(0, c, y, x);
        if (s.erased_image.at(0, c, y, x) != want) return false;
      }
    }
  return zeros + ones + halves == static_cast<std::size_t>(s.height() * s.width());
}

inline std::vector<Transform> transforms_for(int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> off(-size / 4, size / 4);
  const int side = size * 3 / 4;
  std::uniform_int_distribution<int> origin(0, size - side);
  return {Transform::hflip(),       Transform::rot90(1),  Transform::rot90(2), Transform::rot90(3),
          Transform::crop(origin(rng), origin(rng), side, side), Transform::shift(off(rng), off(rng))};
}

// Direct definition: cosine similarity between zero-padded 3x3 patches,
// softmax (scale 10) over valid background patches, overlap-add divided by 9.
inline Tensor attention(const Tensor& fg, const Tensor& bg, const Tensor& validity, double scale,
                        std::vector<std::vector<double>>* weights_out = nullptr) {
  const Shape s = fg.shape();
  auto patch = [&](const Tensor& t, int n, int py, int px) {
    std::vector<double> v;
    for (int c = 0; c < s.c; ++c)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int y = py + dy, x = px + dx;
          v.push_back(y >= 0 && y < s.h && x >= 0 && x < s.w ? t.at(n, c, y, x) : 0.0);
        }
    return v;
  };
  auto norm = [](const std::vector<double>& v) {
    double a = 0.0;
    for (double e : v) a += e * e;
    return std::sqrt(a + 1e-8);
  };
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    std::vector<int> valid;
    for (int p = 0; p < s.h * s.w; ++p) {
      bool ok = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int y = p / s.w + dy, x = p % s.w + dx;
          if (y >= 0 && y < s.h && x >= 0 && x < s.w && validity.at(n, 0, y, x) <= 0.0) ok = false;
        }
      if (ok) valid.push_back(p);
    }
    std::vector<double> dense(static_cast<std::size_t>(s.h * s.w * s.h * s.w), 0.0);
    for (int q = 0; q < s.h * s.w; ++q) {
      const auto f = patch(fg, n, q / s.w, q % s.w);
      const double fn = norm(f);
      std::vector<double> score;
      double mx = -1e300;
      for (int p : valid) {
        const auto b = patch(bg, n, p / s.w, p % s.w);
        double dot = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) dot += f[i] * b[i];
        score.push_back(scale * dot / (fn * norm(b)));
        mx = std::max(mx, score.back());
      }
      double z = 0.0;
      for (double& e : score) z += (e = std::exp(e - mx));
      for (std::size_t k = 0; k < valid.size(); ++k) {
        const double wgt = score[k] / z;
        dense[static_cast<std::size_t>(q * s.h * s.w + valid[k])] = wgt;
        const int py = valid[k] / s.w, px = valid[k] % s.w;
        for (int c = 0; c < s.c; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int oy = q / s.w + dy, ox = q % s.w + dx;
              const int by = py + dy, bx = px + dx;
              if (oy < 0 || oy >= s.h || ox < 0 || ox >= s.w) continue;
              const double bv = by >= 0 && by < s.h && bx >= 0 && bx < s.w ? bg.at(n, c, by, bx) : 0.0;
              out.at(n, c, oy, ox) += wgt * bv / 9.0;
            }
      }
    }
    if (weights_out) weights_out->push_back(std::move(dense));
  }
  return out;
}

inline double top_singular(const Tensor& w) {
  const Shape& s = w.shape();
  Eigen::MatrixXd m(s.n, static_cast<Eigen::Index>(w.size() / static_cast<std::size_t>(s.n)));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = w[static_cast<std::size_t>(r * m.cols() + c)];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

// Straight from the SSIM definition: per-window Gaussian moments, valid windows only.
inline double ssim(const Tensor& a, const Tensor& b) {
  const Shape& s = a.shape();
  double win[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  int count = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + 11 <= s.h; ++y)
        for (int x = 0; x + 11 <= s.w; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              const double w = win[i][j] / total, va = a.at(n, c, y + i, x + j), vb = b.at(n, c, y + i, x + j);
              ma += w * va, mb += w * vb, saa += w * va * va, sbb += w * vb * vb, sab += w * va * vb;
            }
          const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
          acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++count;
        }
  return acc / count;
}

}  // namespace oracle
