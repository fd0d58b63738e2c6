// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vidfuse/numerics/adam.hpp"
#include "vidfuse/numerics/grad_check.hpp"
#include "vidfuse/numerics/ops.hpp"
#include "vidfuse/numerics/parallel.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"
