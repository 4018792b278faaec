// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "amodal/error.hpp"
#include "amodal/network.hpp"

namespace amodal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

constexpr int kPatch = 3;
constexpr int kTaps = kPatch * kPatch;

// Rows are positions (y*w+x); columns are (c, ky, kx) of the zero-padded 3x3 patch.
RowMat unfold(const Tensor& t, int n) {
  const Shape& s = t.shape();
  RowMat m = RowMat::Zero(static_cast<Eigen::Index>(s.plane()), s.c * kTaps);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const Eigen::Index row = y * s.w + x;
      for (int c = 0; c < s.c; ++c)
        for (int ky = 0; ky < kPatch; ++ky)
          for (int kx = 0; kx < kPatch; ++kx) {
            const int sy = y + ky - 1, sx = x + kx - 1;
            if (sy >= 0 && sy < s.h && sx >= 0 && sx < s.w) m(row, (c * kPatch + ky) * kPatch + kx) = t.at(n, c, sy, sx);
          }
    }
  return m;
}

// Adjoint of unfold: overlap-adds patch rows back onto the map of sample n.
void fold_add(const RowMat& m, Tensor& t, int n, double factor) {
  const Shape& s = t.shape();
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const Eigen::Index row = y * s.w + x;
      for (int c = 0; c < s.c; ++c)
        for (int ky = 0; ky < kPatch; ++ky)
          for (int kx = 0; kx < kPatch; ++kx) {
            const int sy = y + ky - 1, sx = x + kx - 1;
            if (sy >= 0 && sy < s.h && sx >= 0 && sx < s.w)
              t.at(n, c, sy, sx) += factor * m(row, (c * kPatch + ky) * kPatch + kx);
          }
    }
}

Vec row_norms(const RowMat& m, double eps) { return (m.rowwise().squaredNorm().array() + eps).sqrt(); }

// Gradient of x / sqrt(|x|^2 + eps) per row.
RowMat normalize_backward(const RowMat& x, const Vec& norms, const RowMat& d_hat) {
  RowMat dx(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = norms(r);
    const double dot = x.row(r).dot(d_hat.row(r));
    dx.row(r) = d_hat.row(r) / n - x.row(r) * (dot / (n * n * n));
  }
  return dx;
}

struct SampleForward {
  std::vector<int> valid;  // patch centres
  RowMat fg_patches, bg_valid, fg_hat, bg_hat, weights;
  Vec fg_norms, bg_norms;
};

SampleForward forward_sample(const Tensor& fg, const Tensor& bg, const std::vector<bool>& valid, int n,
                             const AttentionOptions& opts) {
  SampleForward f;
  for (int i = 0; i < static_cast<int>(valid.size()); ++i)
    if (valid[static_cast<std::size_t>(i)]) f.valid.push_back(i);
  require(!f.valid.empty(), ErrorKind::kData, "contextual_attention: no valid background patch");

  f.fg_patches = unfold(fg, n);
  const RowMat bg_all = unfold(bg, n);
  f.bg_valid.resize(static_cast<Eigen::Index>(f.valid.size()), bg_all.cols());
  for (std::size_t k = 0; k < f.valid.size(); ++k) f.bg_valid.row(static_cast<Eigen::Index>(k)) = bg_all.row(f.valid[k]);

  f.fg_norms = row_norms(f.fg_patches, opts.norm_eps);
  f.bg_norms = row_norms(f.bg_valid, opts.norm_eps);
  f.fg_hat = f.fg_norms.cwiseInverse().asDiagonal() * f.fg_patches;
  f.bg_hat = f.bg_norms.cwiseInverse().asDiagonal() * f.bg_valid;

  RowMat scores = opts.softmax_scale * (f.fg_hat * f.bg_hat.transpose());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - mx).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  f.weights = std::move(scores);
  return f;
}

}  // namespace

Tensor min_pool2(const Tensor& t) {
  const Shape& s = t.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, ErrorKind::kShape, "min_pool2: odd extents " + s.str());
  Tensor out({s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h / 2; ++y)
        for (int x = 0; x < s.w / 2; ++x)
          out.at(n, c, y, x) = std::min(std::min(t.at(n, c, 2 * y, 2 * x), t.at(n, c, 2 * y, 2 * x + 1)),
                                        std::min(t.at(n, c, 2 * y + 1, 2 * x), t.at(n, c, 2 * y + 1, 2 * x + 1)));
  return out;
}

std::vector<std::vector<bool>> valid_patches(const Tensor& validity) {
  const Shape& s = validity.shape();
  require(s.c == 1, ErrorKind::kShape, "validity must have one channel");
  std::vector<std::vector<bool>> out(static_cast<std::size_t>(s.n), std::vector<bool>(s.plane(), false));
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        bool ok = true;
        for (int dy = -1; dy <= 1 && ok; ++dy)
          for (int dx = -1; dx <= 1 && ok; ++dx) {
            const int sy = y + dy, sx = x + dx;
            if (sy >= 0 && sy < s.h && sx >= 0 && sx < s.w && !(validity.at(n, 0, sy, sx) > 0.0)) ok = false;
          }
        out[static_cast<std::size_t>(n)][static_cast<std::size_t>(y * s.w + x)] = ok;
      }
  return out;
}

std::vector<std::vector<double>> attention_weights(const Tensor& fg, const Tensor& bg, const Tensor& validity,
                                                   const AttentionOptions& opts) {
  require(fg.shape() == bg.shape(), ErrorKind::kShape, "attention: fg/bg shape mismatch");
  const Shape& s = fg.shape();
  require(validity.shape() == Shape{s.n, 1, s.h, s.w}, ErrorKind::kShape, "attention: validity misaligned");
  const auto valid = valid_patches(validity);
  std::vector<std::vector<double>> out;
  const std::size_t positions = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const SampleForward f = forward_sample(fg, bg, valid[static_cast<std::size_t>(n)], n, opts);
    std::vector<double> dense(positions * positions, 0.0);
    for (std::size_t q = 0; q < positions; ++q)
      for (std::size_t k = 0; k < f.valid.size(); ++k)
        dense[q * positions + static_cast<std::size_t>(f.valid[k])] =
            f.weights(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k));
    out.push_back(std::move(dense));
  }
  return out;
}

Var contextual_attention(Var fg, Var bg, const Tensor& validity, const AttentionOptions& opts) {
  require(fg.shape() == bg.shape(), ErrorKind::kShape, "attention: fg/bg shape mismatch");
  const Shape s = fg.shape();
  require(validity.shape() == Shape{s.n, 1, s.h, s.w}, ErrorKind::kShape,
          "attention: validity " + validity.shape().str() + " misaligned with features " + s.str());
  const auto valid = valid_patches(validity);

  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    const SampleForward f = forward_sample(fg.value(), bg.value(), valid[static_cast<std::size_t>(n)], n, opts);
    const RowMat recon = f.weights * f.bg_valid;
    fold_add(recon, out, n, 1.0 / kTaps);
  }

  return fg.tape->record("contextual_attention", {fg, bg}, std::move(out), [valid, opts](BackwardCtx& ctx) {
    const Tensor& fgv = *ctx.in_values[0];
    const Tensor& bgv = *ctx.in_values[1];
    const Shape& sh = fgv.shape();
    for (int n = 0; n < sh.n; ++n) {
      const SampleForward f = forward_sample(fgv, bgv, valid[static_cast<std::size_t>(n)], n, opts);
      const RowMat d_recon = unfold(ctx.out_grad, n) / static_cast<double>(kTaps);
      const RowMat d_weights = d_recon * f.bg_valid.transpose();
      RowMat d_bg_valid = f.weights.transpose() * d_recon;

      // Softmax backward, then the scale.
      RowMat d_scores(d_weights.rows(), d_weights.cols());
      for (Eigen::Index r = 0; r < d_weights.rows(); ++r) {
        const double inner = f.weights.row(r).dot(d_weights.row(r));
        d_scores.row(r) = f.weights.row(r).array() * (d_weights.row(r).array() - inner);
      }
      d_scores *= opts.softmax_scale;

      if (ctx.in_grads[0]) {
        const RowMat d_fg_hat = d_scores * f.bg_hat;
        fold_add(normalize_backward(f.fg_patches, f.fg_norms, d_fg_hat), *ctx.in_grads[0], n, 1.0);
      }
      if (ctx.in_grads[1]) {
        const RowMat d_bg_hat = d_scores.transpose() * f.fg_hat;
        d_bg_valid += normalize_backward(f.bg_valid, f.bg_norms, d_bg_hat);
        RowMat d_bg_all = RowMat::Zero(static_cast<Eigen::Index>(sh.plane()), d_bg_valid.cols());
        for (std::size_t k = 0; k < f.valid.size(); ++k)
          d_bg_all.row(f.valid[k]) = d_bg_valid.row(static_cast<Eigen::Index>(k));
        fold_add(d_bg_all, *ctx.in_grads[1], n, 1.0);
      }
    }
  });
}

}  // namespace amodal
