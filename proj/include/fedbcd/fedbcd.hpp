#pragma once

#include "fedbcd/baselines.hpp"
#include "fedbcd/cloud.hpp"
#include "fedbcd/config.hpp"
#include "fedbcd/edge.hpp"
#include "fedbcd/experiment.hpp"
#include "fedbcd/latency.hpp"
#include "fedbcd/metrics.hpp"
#include "fedbcd/model.hpp"
#include "fedbcd/partition.hpp"
#include "fedbcd/protocol.hpp"
#include "fedbcd/rng.hpp"
