// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <optional>

#include "amodal/error.hpp"
#include "amodal/network.hpp"

namespace amodal {

namespace {

constexpr int kImageChannels = 3;
constexpr int kStageInput = kImageChannels + 1;  // image + weighted mask

ConvSpec same(int kernel, int dilation = 1) { return {1, dilation * (kernel - 1) / 2, dilation}; }
ConvSpec down(int kernel) { return {2, (kernel - 1) / 2, 1}; }

struct StageBuilder {
  std::string prefix;
  Activation phi;
  std::mt19937_64& rng;
  std::vector<StageLayer> layers;

  StageBuilder& add(int in_c, int out_c, int kernel, ConvSpec spec, bool up = false, std::optional<Activation> act = {}) {
    const std::string name = prefix + "." + std::to_string(layers.size());
    layers.push_back({GatedConvLayer::create(name, in_c, out_c, kernel, spec, act.value_or(phi), rng), up});
    return *this;
  }
};

Tensor hole_indicator(const Tensor& weighted, bool hole) {
  Tensor out(weighted.shape());
  for (std::size_t i = 0; i < weighted.size(); ++i) out[i] = ((weighted[i] == 0.0) == hole) ? 1.0 : 0.0;
  return out;
}

Tensor broadcast_channels(const Tensor& single, int channels) {
  const Shape& s = single.shape();
  Tensor out({s.n, channels, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out.at(n, c, y, x) = single.at(n, 0, y, x);
  return out;
}

}  // namespace

Generator::Generator(const ModelConfig& config) : config_(config) {
  require(config.resolution >= 8 && config.resolution % 4 == 0, ErrorKind::kUsage,
          "generator resolution must be a multiple of 4 and at least 8");
  std::mt19937_64 rng(config.seed);
  const int c1 = config.channels1, c2 = config.channels2, c3 = config.channels3;
  const int c_out = std::max(1, c1 / 2);

  StageBuilder coarse{"coarse", config.phi, rng, {}};
  coarse.add(kStageInput, c1, 5, same(5))
      .add(c1, c2, 3, down(3))
      .add(c2, c2, 3, same(3))
      .add(c2, c3, 3, down(3))
      .add(c3, c3, 3, same(3))
      .add(c3, c3, 3, same(3, 2))
      .add(c3, c3, 3, same(3, 4))
      .add(c3, c3, 3, same(3, 8))
      .add(c3, c3, 3, same(3))
      .add(c3, c2, 3, same(3), true)
      .add(c2, c2, 3, same(3))
      .add(c2, c1, 3, same(3), true)
      .add(c1, c_out, 3, same(3));
  coarse_ = std::move(coarse.layers);
  coarse_head_ = ConvLayer::create("coarse.head", c_out, kImageChannels, 3, same(3), std::sqrt(1.0 / (9.0 * c_out)), rng);

  StageBuilder conv{"refine.conv", config.phi, rng, {}};
  conv.add(kStageInput, c1, 5, same(5))
      .add(c1, c1, 3, down(3))
      .add(c1, c2, 3, same(3))
      .add(c2, c2, 3, down(3))
      .add(c2, c3, 3, same(3))
      .add(c3, c3, 3, same(3, 2))
      .add(c3, c3, 3, same(3, 4))
      .add(c3, c3, 3, same(3, 8));
  refine_conv_ = std::move(conv.layers);

  StageBuilder attn_in{"refine.attn_in", config.phi, rng, {}};
  attn_in.add(kStageInput, c1, 5, same(5))
      .add(c1, c1, 3, down(3))
      .add(c1, c2, 3, same(3))
      .add(c2, c3, 3, down(3))
      .add(c3, c3, 3, same(3), false, Activation::kRelu);
  refine_attn_in_ = std::move(attn_in.layers);

  StageBuilder attn_out{"refine.attn_out", config.phi, rng, {}};
  attn_out.add(c3, c3, 3, same(3)).add(c3, c3, 3, same(3));
  refine_attn_out_ = std::move(attn_out.layers);

  StageBuilder merge{"refine.merge", config.phi, rng, {}};
  merge.add(2 * c3, c3, 3, same(3))
      .add(c3, c3, 3, same(3))
      .add(c3, c2, 3, same(3), true)
      .add(c2, c2, 3, same(3))
      .add(c2, c1, 3, same(3), true)
      .add(c1, c_out, 3, same(3));
  refine_merge_ = std::move(merge.layers);
  refine_head_ = ConvLayer::create("refine.head", c_out, kImageChannels, 3, same(3), std::sqrt(1.0 / (9.0 * c_out)), rng);
}

std::vector<Parameter*> Generator::params() {
  std::vector<Parameter*> out;
  auto push_stage = [&](std::vector<StageLayer>& stage) {
    for (auto& s : stage)
      for (Parameter* p : s.layer.params()) out.push_back(p);
  };
  push_stage(coarse_);
  for (Parameter* p : coarse_head_.params()) out.push_back(p);
  push_stage(refine_conv_);
  push_stage(refine_attn_in_);
  push_stage(refine_attn_out_);
  push_stage(refine_merge_);
  for (Parameter* p : refine_head_.params()) out.push_back(p);
  return out;
}

Var Generator::run_stage(std::vector<StageLayer>& stage, Var x, bool track) {
  for (auto& s : stage) {
    if (s.upsample_before) x = ops::resample(x, Resample::kNearestUp2);
    x = gated_conv(s.layer, x, track);
  }
  return x;
}

GeneratorOutput Generator::forward(Tape& tape, const Tensor& erased, const Tensor& weighted, bool track) {
  const Shape& es = erased.shape();
  require(es.c == kImageChannels && es.h == config_.resolution && es.w == config_.resolution, ErrorKind::kShape,
          "generator: input " + es.str() + " does not match resolution " + std::to_string(config_.resolution));
  require(weighted.shape() == Shape{es.n, 1, es.h, es.w}, ErrorKind::kShape,
          "generator: weighted mask " + weighted.shape().str() + " misaligned with image " + es.str());

  Var erased_v = tape.constant(erased);
  Var weighted_v = tape.constant(weighted);
  Var hole = tape.constant(broadcast_channels(hole_indicator(weighted, true), kImageChannels));
  Var keep = tape.constant(broadcast_channels(hole_indicator(weighted, false), kImageChannels));
  Var known = ops::mul(erased_v, keep);

  Var x = run_stage(coarse_, ops::concat_channels(erased_v, weighted_v), track);
  Var coarse = ops::activation(Activation::kTanh, conv_layer(coarse_head_, x, track));

  Var refine_image = config_.paste_coarse ? ops::add(ops::mul(coarse, hole), known) : coarse;
  Var refine_in = ops::concat_channels(refine_image, weighted_v);

  Var conv_branch = run_stage(refine_conv_, refine_in, track);
  Var attn = run_stage(refine_attn_in_, refine_in, track);

  Tensor validity = min_pool2(min_pool2(weighted));
  const auto valid = valid_patches(validity);
  for (int n = 0; n < es.n; ++n) {
    // A sample whose hole swallows every patch at this scale attends over all positions.
    const auto& flags = valid[static_cast<std::size_t>(n)];
    if (std::none_of(flags.begin(), flags.end(), [](bool b) { return b; })) {
      for (int y = 0; y < validity.shape().h; ++y)
        for (int xx = 0; xx < validity.shape().w; ++xx) validity.at(n, 0, y, xx) = 1.0;
    }
  }
  attn = contextual_attention(attn, attn, validity, config_.attention);
  attn = run_stage(refine_attn_out_, attn, track);

  Var merged = run_stage(refine_merge_, ops::concat_channels(conv_branch, attn), track);
  Var refined = ops::activation(Activation::kTanh, conv_layer(refine_head_, merged, track));
  Var composited = ops::add(ops::mul(refined, hole), known);
  return {coarse, refined, composited};
}

}  // namespace amodal
