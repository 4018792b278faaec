// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace amodal {

struct AuditOptions {
  double tolerance = 1e-4;
  double eps = 1e-6;
  std::uint64_t seed = 11;
  /// Coordinates probed per parameter in the whole-model checks; 0 probes all.
  std::size_t model_coords = 4;
};

struct AuditEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  bool passed = false;
  std::string worst;
};

struct AuditReport {
  std::vector<AuditEntry> entries;

  bool passed() const;
  /// One "PASS|FAIL name max_rel=... coords=..." line per entry.
  std::string format() const;
};

/// Finite-difference audit of every differentiable op, layer, model, and loss at 8x8.
AuditReport run_audit(const AuditOptions& options = {});

}  // namespace amodal
