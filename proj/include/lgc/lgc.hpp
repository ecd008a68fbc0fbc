// SPDX-License-Identifier: Apache-2.0
/**
 * @file   lgc.hpp
 * @brief  Umbrella header.
 */
#pragma once

#include "lgc/autodiff.hpp"
#include "lgc/checkpoint.hpp"
#include "lgc/data.hpp"
#include "lgc/error.hpp"
#include "lgc/gradcheck.hpp"
#include "lgc/kernels.hpp"
#include "lgc/model.hpp"
#include "lgc/ops.hpp"
#include "lgc/optim.hpp"
#include "lgc/report.hpp"
#include "lgc/scheme.hpp"
#include "lgc/tensor.hpp"
#include "lgc/train.hpp"
