#pragma once

// samint: sparse nonparametric additive models with pairwise interactions,
// fit by L0-penalized block coordinate descent over penalized spline bases,
// with an optional strong-hierarchy relax-and-round refinement.

#include "samint/block.hpp"
#include "samint/block_set.hpp"
#include "samint/dataset.hpp"
#include "samint/evaluation.hpp"
#include "samint/hierarchy.hpp"
#include "samint/model.hpp"
#include "samint/model_io.hpp"
#include "samint/path.hpp"
#include "samint/solver.hpp"
#include "samint/splines.hpp"
#include "samint/util.hpp"
