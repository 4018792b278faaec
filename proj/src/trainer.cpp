// SPDX-License-Identifier: Apache-2.0
#include "amodal/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "amodal/dataset.hpp"
#include "amodal/error.hpp"

namespace amodal {

namespace {

constexpr char kStepKey[] = "meta/step";
constexpr char kConfigKey[] = "meta/config";

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

void save_adam(Container& c, const std::string& prefix, std::span<Parameter* const> params, const AdamState& s) {
  c.put_i64(prefix + "/t", s.t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.put_tensor(prefix + "/m/" + params[i]->name, s.m[i]);
    c.put_tensor(prefix + "/v/" + params[i]->name, s.v[i]);
  }
}

void load_tensor_into(const Container& c, const std::string& name, Tensor& dst) {
  Tensor t = c.tensor(name);
  require(t.shape() == dst.shape(), ErrorKind::kFormat,
          "record '" + name + "' has shape " + t.shape().str() + ", expected " + dst.shape().str());
  dst = std::move(t);
}

void load_adam(const Container& c, const std::string& prefix, std::span<Parameter* const> params, AdamState& s) {
  s.t = c.i64(prefix + "/t");
  for (std::size_t i = 0; i < params.size(); ++i) {
    load_tensor_into(c, prefix + "/m/" + params[i]->name, s.m[i]);
    load_tensor_into(c, prefix + "/v/" + params[i]->name, s.v[i]);
  }
}

}  // namespace

void AdamState::reset(std::span<Parameter* const> params) {
  m.clear();
  v.clear();
  for (Parameter* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
  t = 0;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& opts) {
  if (state.m.size() != params.size()) state.reset(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->grad.shape() == params[i]->value.shape() && state.m[i].shape() == params[i]->value.shape(),
            ErrorKind::kShape, "adam: state misaligned with parameter " + params[i]->name);
    if (!params[i]->grad.all_finite()) fail(ErrorKind::kNumeric, "non-finite gradient in parameter " + params[i]->name);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = opts.beta1 * m[k] + (1.0 - opts.beta1) * g;
      v[k] = opts.beta2 * v[k] + (1.0 - opts.beta2) * g * g;
      p.value[k] -= opts.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opts.eps);
    }
  }
}

Tensor to_network(const Tensor& image01) {
  Tensor out(image01.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * image01[i] - 1.0;
  return out;
}

Tensor from_network(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(0.5 * (image[i] + 1.0), 0.0, 1.0);
  return out;
}

Batch make_batch(const std::vector<CompositeSample>& samples, std::span<const std::size_t> indices,
                 bool weighted_disc_mask) {
  require(!indices.empty(), ErrorKind::kUsage, "empty batch");
  const CompositeSample& first = samples.at(indices[0]);
  const int n = static_cast<int>(indices.size()), h = first.height(), w = first.width();
  Batch b{Tensor({n, 3, h, w}), Tensor({n, 3, h, w}), Tensor({n, 1, h, w}), Tensor({n, 1, h, w}),
          Tensor({n, 1, h, w})};
  for (int i = 0; i < n; ++i) {
    const CompositeSample& s = samples.at(indices[static_cast<std::size_t>(i)]);
    require(s.height() == h && s.width() == w, ErrorKind::kData, "samples in a batch must share extents");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool hidden = s.occluded.get(y, x);
        for (int c = 0; c < 3; ++c) {
          const double v = 2.0 * s.gt_image.at(0, c, y, x) - 1.0;
          b.gt.at(i, c, y, x) = v;
          b.erased.at(i, c, y, x) = hidden ? 0.0 : v;
        }
        b.weighted.at(i, 0, y, x) = s.weighted.get(y, x);
        b.hole.at(i, 0, y, x) = hidden ? 1.0 : 0.0;
        b.disc_mask.at(i, 0, y, x) = weighted_disc_mask ? s.weighted.get(y, x) : (hidden ? 1.0 : 0.0);
      }
  }
  return b;
}

std::vector<std::size_t> select_batch(std::uint64_t seed, std::int64_t step, std::size_t count, int batch_size) {
  require(count > 0, ErrorKind::kData, "no samples to draw a batch from");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<std::size_t>(batch_size) >= count) return idx;
  std::mt19937_64 rng(derive_seed(seed ^ 0xBA7C4ULL, static_cast<std::uint64_t>(step)));
  for (std::size_t i = 0; i < static_cast<std::size_t>(batch_size); ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, count - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

std::string loss_log_header() { return "step\td_loss\thinge_g\tperceptual\tpatch\tstyle\tl1\ttotal"; }

std::string loss_log_line(const StepReport& r) {
  char buf[64];
  std::string out = std::to_string(r.step);
  auto add = [&](double v) {
    std::snprintf(buf, sizeof buf, "\t%.17g", v);
    out += buf;
  };
  add(r.d_loss);
  for (double c : r.g.components) add(c);
  add(r.g.total);
  return out;
}

void import_backbone_weights(FeatureBackbone& backbone, const Container& c) {
  for (Parameter* p : backbone.params()) load_tensor_into(c, "backbone/" + p->name, p->value);
}

Trainer::Trainer(const TrainConfig& config) : Trainer(config, true) {}

Trainer::Trainer(const TrainConfig& config, bool import_backbone)
    : config_(config),
      weights_(config.effective_weights()),
      generator_(config.model),
      discriminator_(config.model),
      backbone_(config.backbone) {
  config_.validate();
  for (const auto& t : config_.perceptual_taps)
    require(backbone_.has_tap(t), ErrorKind::kUsage, "unknown perceptual tap '" + t + "'");
  for (const auto& t : config_.style_taps)
    require(backbone_.has_tap(t), ErrorKind::kUsage, "unknown style tap '" + t + "'");
  if (import_backbone && !config_.backbone_weights.empty())
    import_backbone_weights(backbone_, Container::load(config_.backbone_weights));
  g_state_.reset(generator_.params());
  d_state_.reset(discriminator_.params());
}

void Trainer::set_total_steps(int steps) {
  require(steps >= 0, ErrorKind::kUsage, "train.steps must be >= 0");
  config_.steps = steps;
}

Trainer::Prediction Trainer::predict(const Batch& batch) {
  Tape tape;
  const GeneratorOutput out = generator_.forward(tape, batch.erased, batch.weighted, /*track=*/false);
  return {out.coarse.value(), out.refined.value(), out.composited.value()};
}

StepReport Trainer::train_step(const Batch& batch) {
  StepReport report;
  report.step = step_;
  const auto g_params = generator_.params();
  const auto d_params = discriminator_.params();

  // Generator forward first; its output is independent of the discriminator.
  Tape g_tape;
  const GeneratorOutput out = generator_.forward(g_tape, batch.erased, batch.weighted, /*track=*/true);

  {
    discriminator_.advance_power();
    Tape d_tape;
    Var mask = d_tape.constant(batch.disc_mask);
    Var real = discriminator_.forward(d_tape, d_tape.constant(batch.gt), mask, true, false);
    Var fake = discriminator_.forward(d_tape, d_tape.constant(out.composited.value()), mask, true, false);
    Var d_loss = hinge_d(real, fake);
    report.d_loss = d_loss.value().item();
    require(std::isfinite(report.d_loss) && report.d_loss >= 0.0, ErrorKind::kNumeric,
            "discriminator hinge loss is not a finite nonnegative value");
    zero_grads(d_params);
    d_tape.backward(d_loss);
    adam_step(d_params, d_state_, config_.d_opt);
  }

  Var gt = g_tape.constant(batch.gt);
  Var scores = discriminator_.forward(g_tape, out.composited, g_tape.constant(batch.disc_mask), false, false);
  const std::array<Var, 5> comps{
      hinge_g(scores),
      perceptual(backbone_, out.refined, batch.gt, config_.perceptual_taps),
      patch_loss(batch.hole, batch.gt, out.refined),
      style_loss(backbone_, out.refined, batch.gt, config_.style_taps),
      l1_recon(gt, out.coarse, out.refined),
  };
  std::array<double, 5> values{};
  for (std::size_t i = 0; i < comps.size(); ++i) values[i] = comps[i].value().item();
  report.g = total_loss(weights_, values);
  for (std::size_t i = 1; i < values.size(); ++i)
    require(values[i] >= 0.0, ErrorKind::kNumeric, std::string("negative loss component '") + kComponentNames[i] + "'");

  Var total = total_loss(weights_, comps);
  zero_grads(g_params);
  g_tape.backward(total);
  adam_step(g_params, g_state_, config_.g_opt);

  ++step_;
  return report;
}

StepReport Trainer::step(const std::vector<CompositeSample>& samples) {
  const auto idx = select_batch(config_.seed, step_, samples.size(), config_.batch_size);
  return train_step(make_batch(samples, idx, config_.model.disc_weighted_mask));
}

Container Trainer::checkpoint() {
  Container c;
  c.put_i64(kStepKey, step_);
  c.put_blob(kConfigKey, config_text(config_));
  const auto g_params = generator_.params();
  const auto d_params = discriminator_.params();
  for (Parameter* p : g_params) c.put_tensor("gen/" + p->name, p->value);
  for (Parameter* p : d_params) c.put_tensor("disc/" + p->name, p->value);
  const auto& layers = discriminator_.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) c.put_f64("disc_power/" + std::to_string(i), layers[i].state.u);
  for (Parameter* p : backbone_.params()) c.put_tensor("backbone/" + p->name, p->value);
  save_adam(c, "adam_g", g_params, g_state_);
  save_adam(c, "adam_d", d_params, d_state_);
  return c;
}

void Trainer::save(const std::string& path) { checkpoint().save(path); }

Trainer Trainer::restore(const Container& c) {
  const TrainConfig config = apply_config(ConfigMap::parse(c.blob(kConfigKey), "checkpoint config"));
  Trainer t(config, /*import_backbone=*/false);
  t.step_ = c.i64(kStepKey);
  const auto g_params = t.generator_.params();
  const auto d_params = t.discriminator_.params();
  for (Parameter* p : g_params) load_tensor_into(c, "gen/" + p->name, p->value);
  for (Parameter* p : d_params) load_tensor_into(c, "disc/" + p->name, p->value);
  auto& layers = t.discriminator_.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto u = c.f64("disc_power/" + std::to_string(i));
    require(u.size() == layers[i].state.u.size(), ErrorKind::kFormat, "power vector length mismatch");
    layers[i].state.u = std::move(u);
  }
  import_backbone_weights(t.backbone_, c);
  load_adam(c, "adam_g", g_params, t.g_state_);
  load_adam(c, "adam_d", d_params, t.d_state_);
  return t;
}

Trainer Trainer::load(const std::string& path) { return restore(Container::load(path)); }

}  // namespace amodal
