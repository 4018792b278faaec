// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amodal/checkpoint.hpp"
#include "amodal/config.hpp"
#include "amodal/losses.hpp"
#include "amodal/mask.hpp"
#include "amodal/network.hpp"

namespace amodal {

// Optimizer -------------------------------------------------------------------

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  void reset(std::span<Parameter* const> params);
};

/// Bias-corrected adaptive-moment update of every parameter from its grad.
/// All gradients are checked before any value changes; a non-finite one
/// aborts the step with a numeric error naming the parameter.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& opts);

// Batches ---------------------------------------------------------------------

/// Network-space view of samples: images in [-1, 1].
struct Batch {
  Tensor gt;         // n x 3 x H x W
  Tensor erased;     // gt with occluded pixels zeroed
  Tensor weighted;   // n x 1 x H x W
  Tensor hole;       // n x 1 x H x W, 1 on the occluded region
  Tensor disc_mask;  // channel handed to the discriminator
};

Tensor to_network(const Tensor& image01);
Tensor from_network(const Tensor& image);

Batch make_batch(const std::vector<CompositeSample>& samples, std::span<const std::size_t> indices,
                 bool weighted_disc_mask = true);

/// Sample indices for `step`: a seeded draw without replacement, or every
/// sample in order when the batch covers the set.
std::vector<std::size_t> select_batch(std::uint64_t seed, std::int64_t step, std::size_t count, int batch_size);

// Training ----------------------------------------------------------------------

struct StepReport {
  std::int64_t step = 0;  // index of the step that produced this report
  double d_loss = 0.0;
  LossReport g;           // unweighted components and the weighted total
};

std::string loss_log_header();
std::string loss_log_line(const StepReport& r);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  /// One discriminator update on hinge_d, then one generator update on the
  /// weighted total. The step counter advances by one.
  StepReport train_step(const Batch& batch);
  /// Draws the batch for the current step from `samples`.
  StepReport step(const std::vector<CompositeSample>& samples);

  /// Network-space outputs for a batch, no tracking.
  struct Prediction {
    Tensor coarse, refined, composited;
  };
  Prediction predict(const Batch& batch);

  Container checkpoint();
  void save(const std::string& path);
  static Trainer restore(const Container& c);
  static Trainer load(const std::string& path);

  std::int64_t step_count() const { return step_; }
  const TrainConfig& config() const { return config_; }
  /// Extends or shortens the configured step budget, e.g. when resuming.
  void set_total_steps(int steps);
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  FeatureBackbone& backbone() { return backbone_; }

 private:
  Trainer(const TrainConfig& config, bool import_backbone);

  TrainConfig config_;
  LossWeights weights_;
  Generator generator_;
  Discriminator discriminator_;
  FeatureBackbone backbone_;
  AdamState g_state_;
  AdamState d_state_;
  std::int64_t step_ = 0;
};

/// Loads `backbone/<param>` records into the backbone, checking shapes.
void import_backbone_weights(FeatureBackbone& backbone, const Container& c);

}  // namespace amodal
