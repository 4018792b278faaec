// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "amodal/autograd.hpp"
#include "amodal/ops.hpp"

namespace amodal {

/// Registers a parameter on the tape, tracked or as a frozen constant.
Var bind(Tape& tape, Parameter& p, bool track);

// Gated convolution ---------------------------------------------------------

struct GatedConvLayer {
  std::string name;
  Parameter feature_weight;
  Parameter feature_bias;
  Parameter gate_weight;
  Parameter gate_bias;
  ConvSpec spec;
  Activation phi = Activation::kElu;

  static GatedConvLayer create(const std::string& name, int in_c, int out_c, int kernel, ConvSpec spec,
                               Activation phi, std::mt19937_64& rng);
  std::vector<Parameter*> params();
};

/// phi(conv(x; W_feature)) * sigmoid(conv(x; W_gate)).
Var gated_conv(GatedConvLayer& layer, Var input, bool track = true);

struct ConvLayer {
  std::string name;
  Parameter weight;
  Parameter bias;
  ConvSpec spec;

  static ConvLayer create(const std::string& name, int in_c, int out_c, int kernel, ConvSpec spec, double stddev,
                          std::mt19937_64& rng);
  std::vector<Parameter*> params();
};

Var conv_layer(ConvLayer& layer, Var input, bool track = true);

// Contextual attention ------------------------------------------------------

struct AttentionOptions {
  double softmax_scale = 10.0;
  double norm_eps = 1e-8;  // added under the square root of each patch norm
};

/// Background patches are 3x3 (stride 1, zero padded). A patch centred at p is
/// valid iff validity > 0 at every in-frame pixel it covers. Each query position
/// scores all valid patches by cosine similarity, softmaxes the scaled scores,
/// and the output is the overlap-add of the weighted raw patches divided by 9.
/// `validity` is n x 1 x h x w at the feature resolution.
Var contextual_attention(Var fg, Var bg, const Tensor& validity, const AttentionOptions& opts = {});

/// Per-sample attention matrices (queries x positions, row-major h*w by h*w);
/// columns of invalid patches are exactly zero.
std::vector<std::vector<double>> attention_weights(const Tensor& fg, const Tensor& bg, const Tensor& validity,
                                                   const AttentionOptions& opts = {});

/// Patch-validity flags (h*w per sample) used by contextual_attention.
std::vector<std::vector<bool>> valid_patches(const Tensor& validity);

/// 2x2 min-pool, used to bring the weighted mask to the attention resolution.
Tensor min_pool2(const Tensor& t);

// Spectral normalization -----------------------------------------------------

struct SpectralState {
  std::vector<double> u;  // length out_c
};

struct SpectralResult {
  Tensor weight;  // normalized, same shape as input
  double sigma = 0.0;
  std::vector<double> v;
};

SpectralState init_spectral_state(int rows, std::mt19937_64& rng);

/// Power iteration on weight reshaped to (out_c, rest); updates `state.u` and
/// divides by the top singular value estimate. Zero matrices are rejected.
SpectralResult spectral_normalize(const Tensor& weight, SpectralState& state, int iters);

/// Tracked W / sigma with sigma = u^T W v, u and v held constant.
Var spectral_normalized(Var weight, const std::vector<double>& u, const std::vector<double>& v);

// Models --------------------------------------------------------------------

struct ModelConfig {
  int resolution = 64;
  int channels1 = 24;
  int channels2 = 48;
  int channels3 = 96;
  Activation phi = Activation::kElu;
  bool paste_coarse = false;
  std::vector<int> disc_channels{32, 64, 128, 256, 256};
  bool disc_weighted_mask = true;  // false: feed the binary hole mask instead
  AttentionOptions attention{};
  std::uint64_t seed = 1;
};

struct StageLayer {
  GatedConvLayer layer;
  bool upsample_before = false;
};

struct GeneratorOutput {
  Var coarse;
  Var refined;
  Var composited;
};

class Generator {
 public:
  Generator() = default;
  explicit Generator(const ModelConfig& config);

  /// erased: n x 3 x H x W in [-1,1] with holes zeroed; weighted: n x 1 x H x W.
  GeneratorOutput forward(Tape& tape, const Tensor& erased, const Tensor& weighted, bool track = true);
  std::vector<Parameter*> params();
  const ModelConfig& config() const { return config_; }

 private:
  Var run_stage(std::vector<StageLayer>& stage, Var x, bool track);

  ModelConfig config_;
  std::vector<StageLayer> coarse_;
  ConvLayer coarse_head_;
  std::vector<StageLayer> refine_conv_;
  std::vector<StageLayer> refine_attn_in_;
  std::vector<StageLayer> refine_attn_out_;
  std::vector<StageLayer> refine_merge_;
  ConvLayer refine_head_;
};

struct SpectralConvLayer {
  ConvLayer conv;
  SpectralState state;
};

class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const ModelConfig& config);

  /// Patch score map (no pooling). image in [-1,1]; mask_channel n x 1 x H x W.
  /// `update_power` advances each layer's power-iteration state by one step.
  Var forward(Tape& tape, Var image, Var mask_channel, bool track = true, bool update_power = true);
  /// One power-iteration step on every non-zero layer, so later forwards with
  /// update_power=false share a single normalization.
  void advance_power();
  std::vector<Parameter*> params();
  std::vector<SpectralConvLayer>& layers() { return layers_; }
  const std::vector<SpectralConvLayer>& layers() const { return layers_; }

 private:
  std::vector<SpectralConvLayer> layers_;
};

}  // namespace amodal
