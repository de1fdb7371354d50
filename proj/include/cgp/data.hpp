/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace cgp {

// Regression data. Column c of x holds the covariate seen by latent c, so
// different latents may look at different inputs for the same observation.
struct Dataset {
  Eigen::MatrixXd x;  // N x C
  Eigen::VectorXd y;  // N

  int size() const { return static_cast<int>(y.size()); }
  int n_latents() const { return static_cast<int>(x.cols()); }

  void validate() const {
    if (x.rows() != y.size()) throw std::invalid_argument("Dataset: covariate/target length mismatch");
    if (x.cols() < 1) throw std::invalid_argument("Dataset: needs at least one latent column");
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("Dataset: non-finite values");
  }
};

}  // namespace cgp
