#pragma once

#include "smear/alignment.hpp"
#include "smear/annotator.hpp"
#include "smear/baselines.hpp"
#include "smear/core/error.hpp"
#include "smear/core/raster.hpp"
#include "smear/core/types.hpp"
#include "smear/export.hpp"
#include "smear/fusion.hpp"
#include "smear/geometry.hpp"
#include "smear/io/dataset.hpp"
#include "smear/io/ply.hpp"
#include "smear/io/png.hpp"
#include "smear/kdtree.hpp"
#include "smear/metrics.hpp"
#include "smear/parallel.hpp"
#include "smear/simulator.hpp"
