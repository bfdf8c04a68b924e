#pragma once

// Umbrella header.

#include "rlab/config.hpp"
#include "rlab/core.hpp"
#include "rlab/data.hpp"
#include "rlab/denoiser.hpp"
#include "rlab/extractors.hpp"
#include "rlab/harness.hpp"
#include "rlab/layers.hpp"
#include "rlab/metrics.hpp"
#include "rlab/optim.hpp"
#include "rlab/params.hpp"
#include "rlab/plot.hpp"
#include "rlab/rewards.hpp"
#include "rlab/samplers.hpp"
#include "rlab/schedule.hpp"
#include "rlab/trainers.hpp"
