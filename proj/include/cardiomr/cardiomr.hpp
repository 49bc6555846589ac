#pragma once

#include "cardiomr/error.hpp"
#include "cardiomr/kinetics.hpp"
#include "cardiomr/grid.hpp"
#include "cardiomr/fvcore.hpp"
#include "cardiomr/elliptic.hpp"
#include "cardiomr/uniform_fv.hpp"
#include "cardiomr/mrtree.hpp"
#include "cardiomr/leaf_mesh.hpp"
#include "cardiomr/timeint.hpp"
#include "cardiomr/metrics.hpp"
#include "cardiomr/scenario.hpp"
#include "cardiomr/runner.hpp"
