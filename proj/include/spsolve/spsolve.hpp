#pragma once

#include "spsolve/analysis.hpp"
#include "spsolve/core.hpp"
#include "spsolve/harness.hpp"
#include "spsolve/projections.hpp"
#include "spsolve/rng.hpp"
#include "spsolve/selection.hpp"
#include "spsolve/solver.hpp"
