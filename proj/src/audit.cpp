// SPDX-License-Identifier: Apache-2.0
#include "amodal/audit.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "amodal/gradcheck.hpp"
#include "amodal/losses.hpp"
#include "amodal/network.hpp"
#include "amodal/trainer.hpp"

namespace amodal {

namespace {

constexpr int kRes = 8;

// Keeps probe points away from activation kinks so central differences stay smooth.
Tensor away_from_zero(Tensor t, double gap = 0.05) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::fabs(t[i]) < gap) t[i] = t[i] < 0 ? t[i] - gap : t[i] + gap;
  return t;
}

// Scalar probe sum(y * R) with a fixed random R, so no gradient is trivially uniform.
Var probe(Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, y.tape->constant(uniform(y.shape(), rng, -1.0, 1.0))));
}

Tensor test_weighted_mask(int n, int h, int w) {
  Tensor m({n, 1, h, w}, WeightedMask::kContext);
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (y >= h / 4 && y < h / 2 + 1 && x >= w / 4 + b && x < w / 2 + 1 + b) m.at(b, 0, y, x) = WeightedMask::kHidden;
        else if (y >= h / 2 + 1 && y < h - 1 && x >= 1 && x < w - 2) m.at(b, 0, y, x) = WeightedMask::kVisible;
      }
  return m;
}

class Auditor {
 public:
  explicit Auditor(const AuditOptions& o) : opts_(o), rng_(o.seed) {}

  void check(const std::string& name, const LossBuilder& f, std::vector<Parameter*> params, std::size_t coords = 0) {
    GradCheckOptions g;
    g.eps = opts_.eps;
    g.max_coords_per_param = coords;
    g.seed = opts_.seed;
    AuditEntry e;
    e.name = name;
    try {
      const GradCheckResult r = finite_diff_check(f, params, g);
      e.max_rel_error = r.max_rel_error;
      e.coords = r.coords_checked;
      e.worst = r.worst;
      e.passed = r.max_rel_error < opts_.tolerance;
    } catch (const std::exception& ex) {
      e.worst = ex.what();
      e.passed = false;
    }
    report_.entries.push_back(std::move(e));
  }

  Parameter param(const std::string& name, Shape s, double scale = 1.0) {
    return Parameter(name, randn(s, rng_, scale));
  }

  std::mt19937_64& rng() { return rng_; }
  AuditReport take() { return std::move(report_); }

 private:
  AuditOptions opts_;
  std::mt19937_64 rng_;
  AuditReport report_;
};

void audit_kernels(Auditor& a) {
  {
    Parameter x = a.param("x", {2, 3, kRes, kRes});
    Parameter w = a.param("w", {4, 3, 3, 3}, 0.5);
    Parameter b = a.param("b", {1, 1, 1, 4});
    for (const ConvSpec spec : {ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1}, ConvSpec{1, 2, 2}, ConvSpec{2, 0, 1}}) {
      char name[64];
      std::snprintf(name, sizeof name, "conv2d.s%d.p%d.d%d", spec.stride, spec.padding, spec.dilation);
      a.check(name, [&, spec](Tape& t) { return probe(ops::conv2d(t.leaf(x), t.leaf(w), t.leaf(b), spec), 1); },
              {&x, &w, &b});
    }
  }
  for (Activation act : {Activation::kElu, Activation::kRelu, Activation::kLeakyRelu, Activation::kSigmoid,
                         Activation::kTanh, Activation::kIdentity}) {
    Parameter x("x", away_from_zero(randn({1, 2, kRes, kRes}, a.rng())));
    a.check("activation." + std::string(activation_name(act)),
            [&](Tape& t) { return probe(ops::activation(act, t.leaf(x)), 2); }, {&x});
  }
  {
    Parameter x = a.param("x", {1, 2, kRes, kRes});
    a.check("resample.nearest_up2", [&](Tape& t) { return probe(ops::resample(t.leaf(x), Resample::kNearestUp2), 3); },
            {&x});
    a.check("resample.avg_down2", [&](Tape& t) { return probe(ops::resample(t.leaf(x), Resample::kAvgDown2), 3); },
            {&x});
  }
  {
    Parameter x = a.param("x", {1, 2, kRes, kRes});
    Parameter y("y", away_from_zero(randn({1, 2, kRes, kRes}, a.rng())));
    a.check("elementwise",
            [&](Tape& t) {
              Var xv = t.leaf(x), yv = t.leaf(y);
              Var e = ops::add(ops::mul(xv, yv), ops::sub(ops::scale(xv, 0.7), ops::affine(yv, -1.3, 0.2)));
              Var c = ops::concat_channels(ops::abs(yv), e);
              const std::vector<Var> terms{probe(c, 4), ops::mean(ops::mul(xv, xv)), ops::sum(xv)};
              const std::vector<double> w{1.0, 0.5, -0.25};
              return ops::weighted_sum(terms, w);
            },
            {&x, &y});
  }
}

void audit_layers(Auditor& a) {
  for (const auto& [name, spec] : std::vector<std::pair<std::string, ConvSpec>>{
           {"gated_conv.3x3", {1, 1, 1}}, {"gated_conv.dilated", {1, 2, 2}}, {"gated_conv.strided", {2, 1, 1}}}) {
    GatedConvLayer layer = GatedConvLayer::create("g", 4, 3, 3, spec, Activation::kElu, a.rng());
    for (Parameter* p : layer.params()) p->value = randn(p->value.shape(), a.rng(), 0.5);
    Parameter x = a.param("x", {1, 4, kRes, kRes});
    auto params = layer.params();
    params.push_back(&x);
    a.check(name, [&](Tape& t) { return probe(gated_conv(layer, t.leaf(x)), 5); }, params);
  }
  {
    Parameter fg = a.param("fg", {2, 3, kRes, kRes});
    Parameter bg = a.param("bg", {2, 3, kRes, kRes});
    const Tensor validity = test_weighted_mask(2, kRes, kRes);
    a.check("contextual_attention",
            [&](Tape& t) { return probe(contextual_attention(t.leaf(fg), t.leaf(bg), validity), 6); }, {&fg, &bg});
    a.check("contextual_attention.self",
            [&](Tape& t) {
              Var f = t.leaf(fg);
              return probe(contextual_attention(f, f, validity), 6);
            },
            {&fg});
  }
  {
    Parameter w = a.param("w", {4, 3, 3, 3});
    Parameter x = a.param("x", {1, 3, kRes, kRes});
    Parameter b = a.param("b", {1, 1, 1, 4});
    SpectralState state = init_spectral_state(4, a.rng());
    (void)spectral_normalize(w.value, state, 5);
    a.check("spectral_norm_conv",
            [&](Tape& t) {
              // v tracks the probed weight; u stays frozen.
              const std::size_t cols = w.value.size() / 4;
              std::vector<double> v(cols, 0.0);
              double norm = 0.0;
              for (std::size_t r = 0; r < 4; ++r)
                for (std::size_t c = 0; c < cols; ++c) v[c] += w.value[r * cols + c] * state.u[r];
              for (double e : v) norm += e * e;
              for (double& e : v) e /= std::sqrt(norm);
              Var wn = spectral_normalized(t.leaf(w), state.u, v);
              return probe(ops::conv2d(t.leaf(x), wn, t.leaf(b), {1, 1, 1}), 7);
            },
            {&w, &x, &b});
  }
}

void audit_losses(Auditor& a) {
  Parameter out = a.param("out", {2, 3, kRes, kRes}, 0.5);
  Parameter coarse = a.param("coarse", {2, 3, kRes, kRes}, 0.5);
  const Tensor gt = randn({2, 3, kRes, kRes}, a.rng(), 0.5);
  Parameter real("real", away_from_zero(uniform({2, 1, 2, 2}, a.rng(), -2.0, 2.0)));
  Parameter fake("fake", away_from_zero(uniform({2, 1, 2, 2}, a.rng(), -2.0, 2.0)));
  // keep the hinge margins away from their kinks at +/-1
  for (Parameter* p : {&real, &fake})
    for (std::size_t i = 0; i < p->value.size(); ++i)
      if (std::fabs(std::fabs(p->value[i]) - 1.0) < 0.05) p->value[i] *= 1.2;
  Tensor hole({2, 1, kRes, kRes});
  const Tensor wm = test_weighted_mask(2, kRes, kRes);
  for (std::size_t i = 0; i < hole.size(); ++i) hole[i] = wm[i] == 0.0 ? 1.0 : 0.0;

  BackboneConfig bc;
  bc.channels = {4, 6, 8, 8};
  FeatureBackbone backbone(bc);
  const std::vector<std::string> perc_taps{"block4"};
  const std::vector<std::string> style_taps{"block3", "block4"};

  a.check("loss.hinge_d", [&](Tape& t) { return hinge_d(t.leaf(real), t.leaf(fake)); }, {&real, &fake});
  a.check("loss.hinge_g", [&](Tape& t) { return hinge_g(t.leaf(fake)); }, {&fake});
  a.check("loss.l1", [&](Tape& t) { return l1_recon(t.constant(gt), t.leaf(coarse), t.leaf(out)); }, {&coarse, &out});
  a.check("loss.perceptual", [&](Tape& t) { return perceptual(backbone, t.leaf(out), gt, perc_taps); }, {&out});
  a.check("loss.perceptual.input_tap",
          [&](Tape& t) { return perceptual(backbone, t.leaf(out), gt, {"input", "block1"}); }, {&out});
  a.check("loss.patch", [&](Tape& t) { return patch_loss(hole, gt, t.leaf(out)); }, {&out});
  a.check("loss.gram", [&](Tape& t) { return probe(gram_batched(t.leaf(out)), 8); }, {&out});
  a.check("loss.style", [&](Tape& t) { return style_loss(backbone, t.leaf(out), gt, style_taps); }, {&out});
  a.check("loss.total",
          [&](Tape& t) {
            Var o = t.leaf(out);
            const std::array<Var, 5> comps{hinge_g(t.leaf(fake)), perceptual(backbone, o, gt, perc_taps),
                                           patch_loss(hole, gt, o), style_loss(backbone, o, gt, style_taps),
                                           l1_recon(t.constant(gt), t.leaf(coarse), o)};
            return total_loss(LossWeights{}, comps);
          },
          {&out, &coarse, &fake});
}

void audit_models(Auditor& a, const AuditOptions& opts) {
  ModelConfig mc;
  mc.resolution = kRes;
  mc.channels1 = 4;
  mc.channels2 = 4;
  mc.channels3 = 6;
  mc.disc_channels = {4, 6, 8, 8, 8};
  mc.seed = opts.seed;

  const Tensor wm = test_weighted_mask(2, kRes, kRes);
  std::mt19937_64 rng(opts.seed + 1);
  Tensor erased = uniform({2, 3, kRes, kRes}, rng, -1.0, 1.0);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kRes; ++y)
        for (int x = 0; x < kRes; ++x)
          if (wm.at(b, 0, y, x) == 0.0) erased.at(b, c, y, x) = 0.0;

  Generator gen(mc);
  a.check("model.generator",
          [&](Tape& t) {
            const GeneratorOutput o = gen.forward(t, erased, wm);
            return ops::add(probe(o.coarse, 9), probe(o.refined, 10));
          },
          gen.params(), opts.model_coords);

  Discriminator disc(mc);
  disc.advance_power();
  Parameter image("image", uniform({2, 3, kRes, kRes}, rng, -1.0, 1.0));
  auto dparams = disc.params();
  dparams.push_back(&image);
  a.check("model.discriminator",
          [&](Tape& t) { return probe(disc.forward(t, t.leaf(image), t.constant(wm), true, false), 11); }, dparams,
          opts.model_coords);

  // Generator objective as trained: frozen discriminator, all five terms.
  BackboneConfig bc;
  bc.channels = {4, 6, 8, 8};
  FeatureBackbone backbone(bc);
  Tensor gt = erased;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] == 0.0) gt[i] = 0.3;
  Tensor hole({2, 1, kRes, kRes});
  for (std::size_t i = 0; i < hole.size(); ++i) hole[i] = wm[i] == 0.0 ? 1.0 : 0.0;
  a.check("objective.generator",
          [&](Tape& t) {
            const GeneratorOutput o = gen.forward(t, erased, wm);
            Var scores = disc.forward(t, o.composited, t.constant(wm), false, false);
            const std::array<Var, 5> comps{hinge_g(scores), perceptual(backbone, o.refined, gt, {"block4"}),
                                           patch_loss(hole, gt, o.refined),
                                           style_loss(backbone, o.refined, gt, {"block3", "block4"}),
                                           l1_recon(t.constant(gt), o.coarse, o.refined)};
            return total_loss(LossWeights{}, comps);
          },
          gen.params(), opts.model_coords);
  a.check("objective.discriminator",
          [&](Tape& t) {
            Tape scratch;
            const Tensor fake = gen.forward(scratch, erased, wm, false).composited.value();
            Var m = t.constant(wm);
            return hinge_d(disc.forward(t, t.constant(gt), m, true, false),
                           disc.forward(t, t.constant(fake), m, true, false));
          },
          disc.params(), opts.model_coords);
}

}  // namespace

bool AuditReport::passed() const {
  if (entries.empty()) return false;
  for (const auto& e : entries)
    if (!e.passed) return false;
  return true;
}

std::string AuditReport::format() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%s %-28s max_rel=%.3e coords=%zu", e.passed ? "PASS" : "FAIL", e.name.c_str(),
                  e.max_rel_error, e.coords);
    out += buf;
    if (!e.passed) out += " worst=" + e.worst;
    out += "\n";
  }
  return out;
}

AuditReport run_audit(const AuditOptions& options) {
  Auditor a(options);
  audit_kernels(a);
  audit_layers(a);
  audit_losses(a);
  audit_models(a, options);
  return a.take();
}

}  // namespace amodal
