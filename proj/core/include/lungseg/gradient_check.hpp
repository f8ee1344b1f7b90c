/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lungseg {

/// One evaluation of the scalar loss under test. `kink_signature` identifies
/// which side of every non-smooth point (ReLU) the evaluation landed on; two
/// probes with equal signatures lie on the same smooth piece.
struct Probe {
  double loss = 0.0;
  std::uint64_t kink_signature = 0;
};

/// A block of values that `probe` reads, with the analytic gradient of the
/// loss with respect to it.
struct GradientTarget {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradientCheckOptions {
  double epsilon = 1e-6;
  /// Relative error is |a - n| / max(|a|, |n|, absolute_floor).
  double absolute_floor = 1e-6;
  /// Check at most this many entries per target (evenly strided); 0 = all.
  std::size_t max_entries_per_target = 0;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_target;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  std::size_t kink_fallbacks = 0;
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_relative_error <= tolerance; }
};

/// Compares analytic gradients against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps), perturbing each checked entry in
/// place and restoring it afterwards. When both perturbations cross a kink
/// the step shrinks (up to 1000x); when only one does, a second-order
/// one-sided difference on the unchanged side is used instead.
///
/// Throws ConfigError for epsilon outside [1e-7, 1e-3] or mismatched spans.
GradientCheckResult gradient_check(const std::function<Probe()>& probe,
                                   std::span<const GradientTarget> targets,
                                   const GradientCheckOptions& options = {});

/// Relative error used by gradient_check.
double relative_error(double analytic, double numeric, double absolute_floor);

}  // namespace lungseg
