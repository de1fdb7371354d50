/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include "cgp/data.hpp"
#include "cgp/errors.hpp"
#include "cgp/exact.hpp"
#include "cgp/experiment.hpp"
#include "cgp/inducing.hpp"
#include "cgp/kernel.hpp"
#include "cgp/likelihood.hpp"
#include "cgp/linalg.hpp"
#include "cgp/posterior.hpp"
#include "cgp/random.hpp"
#include "cgp/training.hpp"
