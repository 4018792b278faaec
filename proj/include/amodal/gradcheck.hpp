// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "amodal/autograd.hpp"

namespace amodal {

struct GradCheckOptions {
  double eps = 1e-6;
  /// 0 probes every coordinate; otherwise a seeded random subset per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[<index>]"
  std::size_t coords_checked = 0;
};

/// Builds a scalar loss on the given tape. Must register every checked
/// parameter through Tape::leaf so perturbations of Parameter::value are seen.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|); the maximum is returned.
/// Parameter gradients are zeroed first and left holding the analytic gradient.
GradCheckResult finite_diff_check(const LossBuilder& f, std::span<Parameter* const> params,
                                  const GradCheckOptions& options = {});

}  // namespace amodal
