#pragma once

// Sparse LQR state-feedback synthesis: minimize J(K) + sum_ij Lambda_ij |K_ij|
// over stabilizing static gains, where J is the infinite-horizon LQR cost.
// Convenience header pulling in the whole library.

#include "slqr/common.hpp"
#include "slqr/model.hpp"
#include "slqr/problem_io.hpp"
#include "slqr/kernels.hpp"
#include "slqr/objective.hpp"
#include "slqr/solver_types.hpp"
#include "slqr/newton_cd.hpp"
#include "slqr/ista.hpp"
#include "slqr/sweep.hpp"
