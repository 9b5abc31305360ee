// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
// Everything in one include.
#pragma once

#include "focalvox/backbone/config.hpp"
#include "focalvox/backbone/network.hpp"
#include "focalvox/bench/attention.hpp"
#include "focalvox/bench/interactions.hpp"
#include "focalvox/conv/sparse_conv.hpp"
#include "focalvox/core/dense.hpp"
#include "focalvox/core/error.hpp"
#include "focalvox/core/parallel.hpp"
#include "focalvox/core/random.hpp"
#include "focalvox/erf/pgm.hpp"
#include "focalvox/erf/probe.hpp"
#include "focalvox/io/config_json.hpp"
#include "focalvox/io/files.hpp"
#include "focalvox/io/points.hpp"
#include "focalvox/io/synthetic.hpp"
#include "focalvox/io/voxelizer.hpp"
#include "focalvox/io/weights.hpp"
#include "focalvox/nn/context.hpp"
#include "focalvox/nn/gradcheck.hpp"
#include "focalvox/nn/graph.hpp"
#include "focalvox/nn/ops.hpp"
#include "focalvox/nn/params.hpp"
#include "focalvox/nn/tape.hpp"
#include "focalvox/sfm/config.hpp"
#include "focalvox/sfm/sfm.hpp"
#include "focalvox/sparse/coords.hpp"
#include "focalvox/sparse/gather_scatter.hpp"
#include "focalvox/sparse/kernel.hpp"
#include "focalvox/sparse/rulebook.hpp"
#include "focalvox/sparse/tensor.hpp"
