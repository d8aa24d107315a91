#pragma once

#include "slfpca/errors.hpp"
#include "slfpca/bspline.hpp"
#include "slfpca/dataset.hpp"
#include "slfpca/penalty.hpp"
#include "slfpca/solver.hpp"
#include "slfpca/gcv.hpp"
#include "slfpca/init.hpp"
#include "slfpca/tuning.hpp"
#include "slfpca/simulation.hpp"
#include "slfpca/io.hpp"
