#pragma once

#include "ekmc/data.hpp"
#include "ekmc/ensemble.hpp"
#include "ekmc/errors.hpp"
#include "ekmc/experiment.hpp"
#include "ekmc/kernels.hpp"
#include "ekmc/kmc.hpp"
#include "ekmc/m1_oracle.hpp"
#include "ekmc/metrics.hpp"
#include "ekmc/problem.hpp"
