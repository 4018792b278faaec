// SPDX-License-Identifier: Apache-2.0
#include "amodal/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "amodal/error.hpp"

namespace amodal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

// F F^T / norm with the upper triangle mirrored from the lower, so the result is exactly symmetric.
void gram_into(const ConstMatMap& f, MatMap& g, double norm) {
  g.noalias() = f * f.transpose();
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  g /= norm;
}

std::string block_name(std::size_t i) { return "block" + std::to_string(i + 1); }

void require_taps(const FeatureBackbone& b, const std::vector<std::string>& taps) {
  require(!taps.empty(), ErrorKind::kUsage, "feature loss needs at least one tap");
  for (const auto& t : taps) require(b.has_tap(t), ErrorKind::kUsage, "unknown backbone tap '" + t + "'");
}

}  // namespace

FeatureBackbone::FeatureBackbone(const BackboneConfig& config) : config_(config) {
  require(!config.channels.empty(), ErrorKind::kUsage, "backbone needs at least one block");
  require(config.kernel % 2 == 1, ErrorKind::kUsage, "backbone kernel must be odd");
  std::mt19937_64 rng(config.seed);
  int in_c = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const int out_c = config.channels[i];
    const double stddev = std::sqrt(2.0 / (in_c * config.kernel * config.kernel));
    blocks_.push_back(ConvLayer::create("backbone." + block_name(i), in_c, out_c, config.kernel,
                                        {1, config.kernel / 2, 1}, stddev, rng));
    in_c = out_c;
  }
}

bool FeatureBackbone::has_tap(const std::string& name) const {
  if (name == "input") return true;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (name == block_name(i)) return true;
  return false;
}

int FeatureBackbone::tap_channels(const std::string& name) const {
  if (name == "input") return 3;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (name == block_name(i)) return config_.channels[i];
  fail(ErrorKind::kUsage, "unknown backbone tap '" + name + "'");
}

std::vector<Parameter*> FeatureBackbone::params() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_)
    for (Parameter* p : b.params()) out.push_back(p);
  return out;
}

std::map<std::string, Var> FeatureBackbone::forward(Var image, const std::vector<std::string>& taps) {
  require_taps(*this, taps);
  auto wanted = [&](const std::string& n) { return std::find(taps.begin(), taps.end(), n) != taps.end(); };
  std::map<std::string, Var> out;
  if (wanted("input")) out["input"] = image;
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (wanted(block_name(i))) deepest = i + 1;
  Var x = image;
  for (std::size_t i = 0; i < deepest; ++i) {
    if (i > 0 && config_.downsample) x = ops::resample(x, Resample::kAvgDown2);
    x = ops::activation(Activation::kRelu, conv_layer(blocks_[i], x, /*track=*/false));
    if (wanted(block_name(i))) out[block_name(i)] = x;
  }
  return out;
}

std::map<std::string, Tensor> FeatureBackbone::features(const Tensor& image, const std::vector<std::string>& taps) {
  Tape tape;
  std::map<std::string, Tensor> out;
  for (auto& [name, var] : forward(tape.constant(image), taps)) out[name] = var.value();
  return out;
}

Var hinge_d(Var real_scores, Var fake_scores) {
  require(real_scores.value().size() > 0 && fake_scores.value().size() > 0, ErrorKind::kShape,
          "hinge_d: empty score map");
  Var real_term = ops::mean(ops::activation(Activation::kRelu, ops::affine(real_scores, -1.0, 1.0)));
  Var fake_term = ops::mean(ops::activation(Activation::kRelu, ops::affine(fake_scores, 1.0, 1.0)));
  return ops::add(real_term, fake_term);
}

Var hinge_g(Var fake_scores) {
  require(fake_scores.value().size() > 0, ErrorKind::kShape, "hinge_g: empty score map");
  return ops::scale(ops::mean(fake_scores), -1.0);
}

Var l1_recon(Var gt, Var coarse, Var refined) {
  return ops::add(ops::mean(ops::abs(ops::sub(gt, coarse))), ops::mean(ops::abs(ops::sub(gt, refined))));
}

Var perceptual(FeatureBackbone& backbone, Var out, const Tensor& gt, const std::vector<std::string>& taps) {
  require(out.shape() == gt.shape(), ErrorKind::kShape, "perceptual: shape mismatch");
  Tape& tape = *out.tape;
  auto gt_feats = backbone.features(gt, taps);
  auto out_feats = backbone.forward(out, taps);
  std::vector<Var> terms;
  for (const auto& t : taps) terms.push_back(ops::mean(ops::abs(ops::sub(out_feats.at(t), tape.constant(gt_feats.at(t))))));
  return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

Var patch_loss(const Tensor& mask, const Tensor& gt, Var refined) {
  const Shape& s = gt.shape();
  require(refined.shape() == s, ErrorKind::kShape, "patch_loss: image shape mismatch");
  require(mask.shape() == Shape{s.n, 1, s.h, s.w}, ErrorKind::kShape,
          "patch_loss: mask " + mask.shape().str() + " misaligned with " + s.str());
  Tape& tape = *refined.tape;
  double count = 0.0;
  Tensor m(s);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v = mask.at(n, 0, y, x);
        require(v == 0.0 || v == 1.0, ErrorKind::kData, "patch_loss: mask must be binary");
        count += v;
        for (int c = 0; c < s.c; ++c) m.at(n, c, y, x) = v;
      }
  const double denom = count * s.c;
  if (count == 0.0) return ops::scale(ops::sum(ops::mul(tape.constant(m), refined)), 0.0);
  Var diff = ops::abs(ops::mul(tape.constant(m), ops::sub(tape.constant(gt), refined)));
  return ops::scale(ops::sum(diff), 1.0 / denom);
}

std::vector<double> gram(const Tensor& features) {
  const Shape& s = features.shape();
  require(s.n == 1, ErrorKind::kShape, "gram: expects a single sample, got batch " + std::to_string(s.n));
  const auto k = static_cast<Eigen::Index>(s.plane());
  ConstMatMap f(features.data().data(), s.c, k);
  std::vector<double> out(static_cast<std::size_t>(s.c) * s.c);
  MatMap g(out.data(), s.c, s.c);
  gram_into(f, g, static_cast<double>(s.c) * static_cast<double>(k));
  return out;
}

Var gram_batched(Var features) {
  const Shape s = features.shape();
  const auto k = static_cast<Eigen::Index>(s.plane());
  const double norm = static_cast<double>(s.c) * static_cast<double>(k);
  Tensor out({s.n, 1, s.c, s.c});
  const std::size_t per_in = static_cast<std::size_t>(s.c) * s.plane();
  const std::size_t per_out = static_cast<std::size_t>(s.c) * s.c;
  for (int n = 0; n < s.n; ++n) {
    ConstMatMap f(features.value().data().data() + n * per_in, s.c, k);
    MatMap g(out.data().data() + n * per_out, s.c, s.c);
    gram_into(f, g, norm);
  }
  return features.tape->record("gram", {features}, std::move(out), [s, k, norm, per_in, per_out](BackwardCtx& ctx) {
    // dF = (dG + dG^T) F / norm
    for (int n = 0; n < s.n; ++n) {
      ConstMatMap f(ctx.in_values[0]->data().data() + n * per_in, s.c, k);
      ConstMatMap dg(ctx.out_grad.data().data() + n * per_out, s.c, s.c);
      MatMap df(ctx.in_grads[0]->data().data() + n * per_in, s.c, k);
      df.noalias() += ((dg + dg.transpose()) * f) / norm;
    }
  });
}

Var style_loss(FeatureBackbone& backbone, Var out, const Tensor& gt, const std::vector<std::string>& taps) {
  require(out.shape() == gt.shape(), ErrorKind::kShape, "style_loss: shape mismatch");
  Tape& tape = *out.tape;
  auto gt_feats = backbone.features(gt, taps);
  auto out_feats = backbone.forward(out, taps);
  std::vector<Var> terms;
  for (const auto& t : taps) {
    Var g_gt = gram_batched(tape.constant(gt_feats.at(t)));
    Var g_out = gram_batched(out_feats.at(t));
    terms.push_back(ops::mean(ops::abs(ops::sub(g_out, g_gt))));
  }
  return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

LossReport total_loss(const LossWeights& weights, const std::array<double, 5>& components) {
  LossReport r;
  r.components = components;
  const auto w = weights.as_array();
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (!std::isfinite(components[i]))
      fail(ErrorKind::kNumeric, std::string("non-finite loss component '") + kComponentNames[i] + "'");
    require(w[i] >= 0.0, ErrorKind::kUsage, "loss weights must be nonnegative");
    if (w[i] != 0.0) r.total += w[i] * components[i];
  }
  return r;
}

Var total_loss(const LossWeights& weights, const std::array<Var, 5>& components) {
  const auto w = weights.as_array();
  std::vector<Var> terms;
  std::vector<double> kept;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double v = components[i].value().item();
    if (!std::isfinite(v))
      fail(ErrorKind::kNumeric, std::string("non-finite loss component '") + kComponentNames[i] + "'");
    if (w[i] == 0.0) continue;
    terms.push_back(components[i]);
    kept.push_back(w[i]);
  }
  require(!terms.empty(), ErrorKind::kUsage, "total_loss: every weight is zero");
  return ops::weighted_sum(terms, kept);
}

void ablate(LossWeights& weights, const std::string& term) {
  if (term == "hinge") weights.hinge = 0.0;
  else if (term == "perceptual") weights.perceptual = 0.0;
  else if (term == "patch") weights.patch = 0.0;
  else if (term == "style") weights.style = 0.0;
  else if (term == "l1") weights.l1 = 0.0;
  else fail(ErrorKind::kUsage, "unknown ablation term '" + term + "' (hinge|perceptual|patch|style|l1)");
}

}  // namespace amodal
