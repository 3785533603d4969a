#pragma once

#include "gridmend/netmodel.hpp"
#include "gridmend/milp.hpp"
#include "gridmend/simplex.hpp"
#include "gridmend/branch_bound.hpp"
#include "gridmend/solver.hpp"
#include "gridmend/builder.hpp"
#include "gridmend/engine.hpp"
#include "gridmend/fieldsim.hpp"
#include "gridmend/service.hpp"
