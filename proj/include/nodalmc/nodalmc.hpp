#pragma once

#include "nodalmc/core.hpp"
#include "nodalmc/random.hpp"
#include "nodalmc/statistics.hpp"
#include "nodalmc/models.hpp"
#include "nodalmc/diffusion.hpp"
#include "nodalmc/estimators.hpp"
#include "nodalmc/oracle.hpp"
