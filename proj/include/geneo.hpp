// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "geneo/ablation.hpp"
#include "geneo/backward.hpp"
#include "geneo/checkpoint.hpp"
#include "geneo/config.hpp"
#include "geneo/conv.hpp"
#include "geneo/dataset.hpp"
#include "geneo/error.hpp"
#include "geneo/gradcheck.hpp"
#include "geneo/grid.hpp"
#include "geneo/kernels.hpp"
#include "geneo/losses.hpp"
#include "geneo/metrics.hpp"
#include "geneo/model.hpp"
#include "geneo/optimizer.hpp"
#include "geneo/parallel.hpp"
#include "geneo/ply.hpp"
#include "geneo/pointcloud.hpp"
#include "geneo/rng.hpp"
#include "geneo/synth.hpp"
#include "geneo/template_match.hpp"
#include "geneo/training.hpp"
#include "geneo/voxelize.hpp"
