// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header: the full dot-matrix expiry-date pipeline.

#pragma once

#include "expdate/checkpoint.hpp"
#include "expdate/common.hpp"
#include "expdate/crnn.hpp"
#include "expdate/ctc.hpp"
#include "expdate/dataset.hpp"
#include "expdate/dates.hpp"
#include "expdate/glyphs.hpp"
#include "expdate/image_io.hpp"
#include "expdate/nn.hpp"
#include "expdate/ops.hpp"
#include "expdate/optim.hpp"
#include "expdate/pipeline.hpp"
#include "expdate/render.hpp"
#include "expdate/rng.hpp"
#include "expdate/tensor.hpp"
#include "expdate/train.hpp"
#include "expdate/vae.hpp"
