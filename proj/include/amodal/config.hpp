// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amodal/losses.hpp"
#include "amodal/network.hpp"

namespace amodal {

/// `section.key = value` lines; '#' starts a comment. Later assignments win.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& source = "<config>");
  static ConfigMap load(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Overlays `other` on top of this map.
  void merge(const ConfigMap& other);

 private:
  std::map<std::string, std::string> entries_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  ModelConfig model{};
  BackboneConfig backbone{};
  std::string backbone_weights;  // optional checkpoint holding backbone/<param> records
  std::vector<std::string> perceptual_taps{"block4"};
  std::vector<std::string> style_taps{"block3", "block4"};
  LossWeights weights{};
  std::vector<std::string> ablate;  // loss terms whose weight is forced to zero
  int batch_size = 4;
  int steps = 1000;
  AdamOptions g_opt{};
  AdamOptions d_opt{};
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only

  /// weights with every ablation applied.
  LossWeights effective_weights() const;
  /// Throws a usage error naming the first inconsistent field.
  void validate() const;
};

/// Applies recognized keys from `map` over `base`; unknown keys are usage errors.
TrainConfig apply_config(const ConfigMap& map, TrainConfig base = {});
/// Every key with its resolved value, one per line, in a fixed order.
std::string config_text(const TrainConfig& config);

}  // namespace amodal
