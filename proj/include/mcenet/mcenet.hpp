#pragma once

// Multi-context trajectory prediction for heterogeneous road agents:
// data pipeline, grouping-aware occupancy and scene contexts, the conditional
// variational encoder-decoder model, ranking and evaluation harnesses.

#include "mcenet/config.hpp"
#include "mcenet/dataio.hpp"
#include "mcenet/dbscan.hpp"
#include "mcenet/experiment.hpp"
#include "mcenet/grouping.hpp"
#include "mcenet/heatmap.hpp"
#include "mcenet/metrics.hpp"
#include "mcenet/model.hpp"
#include "mcenet/occupancy.hpp"
#include "mcenet/plot.hpp"
#include "mcenet/ranking.hpp"
#include "mcenet/raster.hpp"
#include "mcenet/scene_tensor.hpp"
#include "mcenet/synthetic.hpp"
#include "mcenet/types.hpp"
