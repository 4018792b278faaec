// SPDX-License-Identifier: Apache-2.0
#include "amodal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "amodal/error.hpp"

namespace amodal {

namespace {

double evaluate(const LossBuilder& f) {
  Tape tape;
  const double v = f(tape).value().item();
  if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "finite_diff_check: non-finite loss at probe point");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& f, std::span<Parameter* const> params,
                                  const GradCheckOptions& options) {
  require(options.eps > 0.0, ErrorKind::kUsage, "finite_diff_check: eps must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.value().item())) fail(ErrorKind::kNumeric, "finite_diff_check: non-finite loss");
    tape.backward(loss);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (Parameter* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double original = p->value[i];
      p->value[i] = original + options.eps;
      const double up = evaluate(f);
      p->value[i] = original - options.eps;
      const double down = evaluate(f);
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = p->grad[i];
      const double err = std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic));
      ++result.coords_checked;
      if (result.worst.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace amodal
