/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cgp/errors.hpp"

namespace cgp {

// Solves L x = b (or L^T x = b) for lower-triangular L.
inline Eigen::MatrixXd tri_solve(const Eigen::MatrixXd& L, const Eigen::MatrixXd& b,
                                 bool transposed = false) {
  if (L.rows() != L.cols() || L.rows() != b.rows())
    throw std::invalid_argument("tri_solve: dimension mismatch");
  if (transposed) return L.transpose().triangularView<Eigen::Upper>().solve(b);
  return L.triangularView<Eigen::Lower>().solve(b);
}

// Lower-triangular Cholesky factor of K + jitter*I, with the jitter that was
// actually applied. Diagonal is strictly positive.
struct CholeskyFactor {
  Eigen::MatrixXd L;
  double jitter = 0.0;

  int dim() const { return static_cast<int>(L.rows()); }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return tri_solve(L, b, false); }
  Eigen::MatrixXd solve_t(const Eigen::MatrixXd& b) const { return tri_solve(L, b, true); }

  // (L L^T) x = b
  Eigen::MatrixXd mat_solve(const Eigen::MatrixXd& b) const { return solve_t(solve(b)); }

  // log |L L^T|
  double log_det() const { return 2.0 * L.diagonal().array().log().sum(); }
};

// Factors K + eps*I, escalating eps tenfold from 1e-6*scale on failure.
// The cap at 1e-2*scale turns silent degradation into a diagnosable error.
inline CholeskyFactor jittered_cholesky(const Eigen::MatrixXd& K, double scale) {
  if (K.rows() != K.cols()) throw std::invalid_argument("jittered_cholesky: matrix not square");
  if (!(scale > 0.0)) throw std::invalid_argument("jittered_cholesky: scale must be positive");

  const double norm = K.cwiseAbs().maxCoeff();
  if (norm > 0.0) {
    const double asym = (K - K.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * norm + 1e-300)
      throw std::invalid_argument("jittered_cholesky: input is not symmetric");
  }

  const Eigen::MatrixXd sym = 0.5 * (K + K.transpose());
  const double cap = 1e-2 * scale * (1.0 + 1e-12);
  for (double eps = 1e-6 * scale; eps <= cap; eps *= 10.0) {
    Eigen::MatrixXd shifted = sym;
    shifted.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      CholeskyFactor f;
      f.L = llt.matrixL();
      f.jitter = eps;
      if ((f.L.diagonal().array() > 0.0).all()) return f;
    }
  }
  throw FactorizationFailed(
      "jittered_cholesky: factorization failed below jitter cap "
      "(degenerate or duplicate inputs?)");
}

// Reverse-mode map for L = chol(A): given the gradient w.r.t. L, returns the
// symmetric gradient w.r.t. A. Derivation: with F = L^{-1} dL,
// L^{-1} dA L^{-T} = F + F^T, so dL = L Phi(L^{-1} dA L^{-T}) where Phi keeps
// the strict lower triangle and halves the diagonal.
inline Eigen::MatrixXd cholesky_pullback(const Eigen::MatrixXd& L, const Eigen::MatrixXd& L_bar) {
  Eigen::MatrixXd G = L.transpose() * Eigen::MatrixXd(L_bar.triangularView<Eigen::Lower>());
  Eigen::MatrixXd P = G.triangularView<Eigen::Lower>();
  P.diagonal() *= 0.5;
  const Eigen::MatrixXd X = tri_solve(L, P, true);                          // L^T X = P
  const Eigen::MatrixXd Y = tri_solve(L, X.transpose(), true).transpose();  // Y = X L^{-1}
  return 0.5 * (Y + Y.transpose());
}

}  // namespace cgp
