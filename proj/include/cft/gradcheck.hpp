#pragma once

#include "cft/tensor.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace cft {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double epsilon = 0.0;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<GradCheckEntry> per_param;
  std::string note;  // names the offending coordinate on non-finite failures
};

// Compares taped gradients against central finite differences.
//
// loss_fn must rebuild the scalar loss from the current parameter *values* on
// every call (deterministically); finite_diff_check perturbs values in place
// and restores them. Relative error per coordinate is
// |analytic - fd| / max(|analytic|, |fd|, 1e-8).
GradCheckReport finite_diff_check(
    const std::function<Tensor(Tape&)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, double epsilon = 1e-5,
    double tolerance = 1e-4);

struct AuditCase {
  std::string name;
  GradCheckReport report;
};

// Canned finite-difference sweep: every primitive composed into a scalar, a
// one-layer transformer on both readouts (including input gradients), and the
// two training losses end to end. Deterministic. Shared by the `gradcheck`
// CLI command and the acceptance suite.
std::vector<AuditCase> standard_gradient_audit(double tolerance = 1e-4);

bool audit_passed(const std::vector<AuditCase>& cases);

}  // namespace cft
