/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <stdexcept>

namespace cgp {

// Jitter escalation ran past its cap; usually duplicate or near-duplicate
// inducing points.
struct FactorizationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A log-density callback returned NaN or infinity.
struct DensityNotFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The full-batch bound became non-finite during optimization.
struct Diverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every restart of a hyperparameter search produced non-finite objectives.
struct OptimizationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A marginal variance collapsed below tolerance; correlation is undefined.
struct DegenerateVariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cgp
