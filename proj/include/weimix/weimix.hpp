#pragma once

// Umbrella header: the whole library.

#include "weimix/cli.hpp"
#include "weimix/config.hpp"
#include "weimix/dataio.hpp"
#include "weimix/errors.hpp"
#include "weimix/gamma.hpp"
#include "weimix/matrix.hpp"
#include "weimix/metrics.hpp"
#include "weimix/mixloss.hpp"
#include "weimix/model_io.hpp"
#include "weimix/neuralnet.hpp"
#include "weimix/rng.hpp"
#include "weimix/synthgen.hpp"
#include "weimix/weibull.hpp"
