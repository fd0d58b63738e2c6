// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vidfuse/config.hpp"
#include "vidfuse/data_io/binary.hpp"
#include "vidfuse/data_io/dataset.hpp"
#include "vidfuse/data_io/image_export.hpp"
#include "vidfuse/data_io/tensor_file.hpp"
#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/evaluation.hpp"
#include "vidfuse/models/checkpoint.hpp"
#include "vidfuse/models/embedding.hpp"
#include "vidfuse/models/generators.hpp"
#include "vidfuse/models/unet.hpp"
#include "vidfuse/numerics.hpp"
#include "vidfuse/sampling.hpp"
#include "vidfuse/schedule.hpp"
#include "vidfuse/training.hpp"
