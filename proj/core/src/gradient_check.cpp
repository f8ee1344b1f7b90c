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
#include "lungseg/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "lungseg/error.hpp"

namespace lungseg {

double relative_error(double analytic, double numeric, double absolute_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), absolute_floor});
  return std::abs(analytic - numeric) / scale;
}

GradientCheckResult gradient_check(const std::function<Probe()>& probe,
                                   std::span<const GradientTarget> targets,
                                   const GradientCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    throw ConfigError("gradient_check epsilon must lie in [1e-7, 1e-3]");
  }
  GradientCheckResult result;
  const Probe base = probe();
  if (!std::isfinite(base.loss)) {
    result.finite = false;
    result.max_relative_error = INFINITY;
    return result;
  }
  const double eps = options.epsilon;
  for (const GradientTarget& target : targets) {
    if (target.values.size() != target.analytic.size()) {
      throw ConfigError("gradient_check target '" + target.name +
                        "' has mismatched value/gradient lengths");
    }
    const std::size_t total = target.values.size();
    std::size_t stride = 1;
    if (options.max_entries_per_target > 0 && total > options.max_entries_per_target) {
      stride = total / options.max_entries_per_target;
    }
    for (std::size_t i = 0; i < total; i += stride) {
      double& value = target.values[i];
      const double saved = value;
      auto probe_at = [&](double offset) {
        value = saved + offset;
        const Probe p = probe();
        value = saved;
        return p;
      };

      double h = eps;
      Probe plus = probe_at(h);
      Probe minus = probe_at(-h);
      bool plus_smooth = plus.kink_signature == base.kink_signature;
      bool minus_smooth = minus.kink_signature == base.kink_signature;
      for (int shrink = 0; shrink < 3 && !plus_smooth && !minus_smooth; ++shrink) {
        h /= 10.0;
        plus = probe_at(h);
        minus = probe_at(-h);
        plus_smooth = plus.kink_signature == base.kink_signature;
        minus_smooth = minus.kink_signature == base.kink_signature;
      }

      double numeric = 0.0;
      if (plus_smooth == minus_smooth) {
        numeric = (plus.loss - minus.loss) / (2.0 * h);
      } else {
        ++result.kink_fallbacks;
        const double side = plus_smooth ? 1.0 : -1.0;
        const Probe& far = plus_smooth ? plus : minus;
        const Probe mid = probe_at(side * h / 2.0);
        if (mid.kink_signature == base.kink_signature) {
          numeric = side * (-3.0 * base.loss + 4.0 * mid.loss - far.loss) / h;
        } else {
          numeric = side * (far.loss - base.loss) / h;
        }
      }
      ++result.entries_checked;
      const double analytic = target.analytic[i];
      if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss) || !std::isfinite(analytic)) {
        result.finite = false;
        result.max_relative_error = INFINITY;
        result.worst_target = target.name;
        result.worst_index = i;
        return result;
      }
      const double err = relative_error(analytic, numeric, options.absolute_floor);
      if (result.worst_target.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_target = target.name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace lungseg
