/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include <catch2/catch_amalgamated.hpp>

#include "cgp/inducing.hpp"
#include "cgp/random.hpp"
#include "testutil.hpp"

using cgp::InducingSet;
using cgp::SqExpKernel;

namespace {

InducingSet single(const Eigen::VectorXd& z) {
  InducingSet s;
  s.locations.push_back(z);
  return s;
}

}  // namespace

TEST_CASE("inducing set validation", "[inducing]") {
  Eigen::VectorXd ok(3), dup(3);
  ok << -1.0, 0.0, 1.0;
  dup << -1.0, 0.0, 0.0;
  CHECK_NOTHROW(single(ok).validate());
  CHECK_THROWS_AS(single(dup).validate(), std::invalid_argument);
  CHECK_THROWS_AS(InducingSet{}.validate(), std::invalid_argument);
  CHECK_NOTHROW(single(Eigen::VectorXd::Constant(1, 2.0)).validate());
}

TEST_CASE("grid initialization spans each covariate column", "[inducing]") {
  Eigen::MatrixXd x(4, 2);
  x << -3.0, 0.0, -1.0, 2.0, 2.0, 4.0, 1.0, 1.0;
  const InducingSet grid = cgp::grid_inducing(x, 3);
  REQUIRE(grid.n_latents() == 2);
  CHECK(grid.locations[0][0] == Catch::Approx(-3.0));
  CHECK(grid.locations[0][2] == Catch::Approx(2.0));
  CHECK(grid.locations[1][0] == Catch::Approx(0.0));
  CHECK(grid.locations[1][2] == Catch::Approx(4.0));

  const InducingSet mid = cgp::grid_inducing(x, 1);
  CHECK(mid.locations[0][0] == Catch::Approx(-0.5));
  CHECK(mid.count(0) == 1);
}

TEST_CASE("prior construction", "[inducing]") {
  SECTION("single latent, single point") {
    const auto prior = cgp::build_prior(single(Eigen::VectorXd::Zero(1)),
                                        {SqExpKernel::from_params(1.0, 1.0)});
    CHECK(prior.dim == 1);
    CHECK(prior.gram[0](0, 0) == Catch::Approx(1.0).margin(1e-5));
  }
  SECTION("two independent latents stack block-diagonally") {
    InducingSet s;
    s.locations.push_back(Eigen::VectorXd::Zero(1));
    s.locations.push_back(Eigen::VectorXd::Constant(1, 0.5));
    const auto prior = cgp::build_prior(
        s, {SqExpKernel::from_params(1.0, 1.0), SqExpKernel::from_params(2.0, 0.7)});
    CHECK(prior.dim == 2);
    CHECK(prior.offset[0] == 0);
    CHECK(prior.offset[1] == 1);
    CHECK(prior.gram.size() == 2);
  }
  SECTION("half-height spacing reproduces the scalar kernel") {
    Eigen::VectorXd z(2);
    z << 0.0, std::sqrt(2.0 * std::log(2.0));
    const auto prior = cgp::build_prior(single(z), {SqExpKernel::from_params(1.0, 1.0)});
    CHECK(prior.gram[0](0, 0) == Catch::Approx(1.0).margin(1e-5));
    CHECK(prior.gram[0](0, 1) == Catch::Approx(0.5).margin(1e-5));
    CHECK(prior.gram[0](1, 0) == Catch::Approx(0.5).margin(1e-5));
  }
  SECTION("duplicate inducing points are rejected at validation") {
    Eigen::VectorXd exact_dup(2), near_dup(3);
    exact_dup << 0.0, 0.0;
    near_dup << 0.0, 1.0, 1.0 + 1e-12;
    CHECK_THROWS_AS(single(exact_dup).validate(), std::invalid_argument);
    CHECK_THROWS_AS(single(near_dup).validate(), std::invalid_argument);
  }
}

TEST_CASE("projection interpolates exactly at inducing points", "[inducing]") {
  Eigen::VectorXd z(3);
  z << -2.0, 0.0, 1.5;
  const std::vector<SqExpKernel> kernels = {SqExpKernel::from_params(1.3, 0.8)};
  const InducingSet s = single(z);
  const auto prior = cgp::build_prior(s, kernels);

  Eigen::MatrixXd x(3, 1);
  x.col(0) = z;
  const cgp::Projection proj = cgp::project(s, kernels, prior, x);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j)
      CHECK(proj.coeff[0](i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-5));
    CHECK(proj.residual[0][i] >= 0.0);
    CHECK(proj.residual[0][i] <= 1e-5 * kernels[0].variance());
  }

  // conditional mean reproduces the inducing values themselves
  cgp::SequentialRng rng(3);
  Eigen::VectorXd u(3);
  for (int i = 0; i < 3; ++i) u[i] = rng.normal();
  CHECK(((proj.coeff[0] * u) - u).cwiseAbs().maxCoeff() < 1e-4 * u.cwiseAbs().maxCoeff() + 1e-6);
}

TEST_CASE("far-field projection decays to the prior", "[inducing]") {
  Eigen::VectorXd z(2);
  z << -1.0, 1.0;
  const std::vector<SqExpKernel> kernels = {SqExpKernel::from_params(2.0, 0.5)};
  const InducingSet s = single(z);
  const auto prior = cgp::build_prior(s, kernels);
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 1.0 + 10.0 * 0.5;  // ten lengthscales past the nearest point
  const cgp::Projection proj = cgp::project(s, kernels, prior, x);
  CHECK(proj.coeff[0].row(0).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(proj.residual[0][0] >= 0.999 * kernels[0].variance());
}

TEST_CASE("single inducing point follows the scalar formula", "[inducing]") {
  const std::vector<SqExpKernel> kernels = {SqExpKernel::from_params(1.7, 1.1)};
  const InducingSet s = single(Eigen::VectorXd::Zero(1));
  const auto prior = cgp::build_prior(s, kernels);
  cgp::SequentialRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd x(1, 1);
    x(0, 0) = rng.uniform(-3.0, 3.0);
    const cgp::Projection proj = cgp::project(s, kernels, prior, x);
    const double k0 = kernels[0](x(0, 0), 0.0);
    const double kz = kernels[0](0.0, 0.0);
    CHECK(proj.coeff[0](0, 0) == Catch::Approx(k0 / kz).margin(1e-5));
    CHECK(proj.residual[0][0] ==
          Catch::Approx(kernels[0](x(0, 0), x(0, 0)) - k0 * k0 / kz).margin(1e-5));
  }
}

TEST_CASE("residual never increases when refining the inducing set", "[inducing]") {
  cgp::SequentialRng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<SqExpKernel> kernels = {
        SqExpKernel::from_params(rng.uniform(0.5, 2.0), rng.uniform(0.5, 1.5))};
    const int m = 3;
    Eigen::VectorXd z(m), z2(m + 1);
    for (int j = 0; j < m; ++j) z[j] = -2.0 + 2.0 * j + 0.3 * rng.normal();
    z2.head(m) = z;
    z2[m] = 3.5 + rng.uniform(0.0, 0.5);

    Eigen::MatrixXd x(7, 1);
    for (int i = 0; i < 7; ++i) x(i, 0) = rng.uniform(-4.0, 4.0);

    const InducingSet coarse = single(z), fine = single(z2);
    const auto proj_coarse = cgp::project(coarse, kernels, cgp::build_prior(coarse, kernels), x);
    const auto proj_fine = cgp::project(fine, kernels, cgp::build_prior(fine, kernels), x);
    for (int i = 0; i < 7; ++i)
      CHECK(proj_fine.residual[0][i] <=
            proj_coarse.residual[0][i] + 1e-5 * kernels[0].variance());
  }
}

TEST_CASE("projection pullback matches finite differences", "[inducing]") {
  cgp::SequentialRng rng(43);
  const int m = 3, n = 4;
  const std::vector<SqExpKernel> kernels = {SqExpKernel::from_params(1.2, 0.9)};
  Eigen::VectorXd z(m);
  z << -1.5, 0.2, 1.8;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = rng.uniform(-2.5, 2.5);

  // random linear functional of the projection outputs
  Eigen::MatrixXd wa(n, m);
  Eigen::VectorXd wr(n);
  for (int i = 0; i < n; ++i) {
    wr[i] = rng.normal();
    for (int j = 0; j < m; ++j) wa(i, j) = rng.normal();
  }

  const auto f = [&](const Eigen::VectorXd& th) {
    const std::vector<SqExpKernel> ks = {SqExpKernel{th[0], th[1]}};
    const InducingSet s = single(th.segment(2, m));
    const auto prior = cgp::build_prior(s, ks);
    const cgp::Projection proj = cgp::project(s, ks, prior, x);
    return (wa.array() * proj.coeff[0].array()).sum() + wr.dot(proj.residual[0]);
  };

  Eigen::VectorXd th(2 + m);
  th << kernels[0].log_variance, kernels[0].log_lengthscale, z;
  const Eigen::VectorXd fd = testutil::fd_gradient(f, th, 1e-5);

  const InducingSet s = single(z);
  const auto prior = cgp::build_prior(s, kernels);
  const cgp::Projection proj = cgp::project(s, kernels, prior, x);
  const cgp::LatentGrads grads =
      cgp::projection_pullback(s, kernels, prior, x, proj, {wa}, {wr});

  Eigen::VectorXd analytic(2 + m);
  analytic << grads.kernel[0].d_log_variance, grads.kernel[0].d_log_lengthscale, grads.z[0];
  CHECK(testutil::max_grad_violation(analytic, fd, 1e-4, 1e-7, 1e-3) <= 1.0);
}
