#pragma once

// Umbrella header.

#include "bspai/bucketed.hpp"
#include "bspai/dense.hpp"
#include "bspai/double_double.hpp"
#include "bspai/error.hpp"
#include "bspai/harness.hpp"
#include "bspai/krylov.hpp"
#include "bspai/matrix_market.hpp"
#include "bspai/precision.hpp"
#include "bspai/refine.hpp"
#include "bspai/spai.hpp"
#include "bspai/sparse_matrix.hpp"
#include "bspai/synthetic.hpp"
#include "bspai/verify.hpp"
