#pragma once

#include "fsu/attacks.hpp"
#include "fsu/benchmark.hpp"
#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/experiment.hpp"
#include "fsu/io.hpp"
#include "fsu/metrics.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"
#include "fsu/training.hpp"
#include "fsu/unlearning.hpp"
