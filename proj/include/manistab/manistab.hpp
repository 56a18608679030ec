#pragma once

/// Umbrella header: the whole library.

#include "manistab/dense.hpp"
#include "manistab/dmd.hpp"
#include "manistab/eigensolver.hpp"
#include "manistab/embedding.hpp"
#include "manistab/enhancement.hpp"
#include "manistab/errors.hpp"
#include "manistab/generators.hpp"
#include "manistab/graph.hpp"
#include "manistab/io.hpp"
#include "manistab/manifold.hpp"
#include "manistab/model_sim.hpp"
#include "manistab/parallel.hpp"
#include "manistab/pipeline.hpp"
#include "manistab/resistance.hpp"
#include "manistab/rng.hpp"
