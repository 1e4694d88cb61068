#pragma once

#include "mts/cov_mts.hpp"
#include "mts/csp.hpp"
#include "mts/dataset.hpp"
#include "mts/lda.hpp"
#include "mts/mean_mts.hpp"
#include "mts/metrics.hpp"
#include "mts/qp.hpp"
#include "mts/rng.hpp"
#include "mts/sim_io.hpp"
#include "mts/simulation.hpp"
#include "mts/stat_core.hpp"
#include "mts/sym_matrix.hpp"
