#pragma once

#include "chdbc/grid.hpp"
#include "chdbc/potential.hpp"
#include "chdbc/linalg.hpp"
#include "chdbc/poisson.hpp"
#include "chdbc/scheme.hpp"
#include "chdbc/diagnostics.hpp"
#include "chdbc/expression.hpp"
#include "chdbc/config.hpp"
#include "chdbc/run.hpp"
