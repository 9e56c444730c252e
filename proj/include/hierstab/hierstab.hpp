#pragma once

// Umbrella header: exact and Monte Carlo harmonic analysis of functions on
// finite product probability spaces, with correlation-decay certificates for
// tree-structured compositions and a site-percolation case study.

#include "hierstab/demo_trees.hpp"
#include "hierstab/efron_stein.hpp"
#include "hierstab/errors.hpp"
#include "hierstab/fourier.hpp"
#include "hierstab/hierarchy.hpp"
#include "hierstab/maxcorr.hpp"
#include "hierstab/mc.hpp"
#include "hierstab/named_functions.hpp"
#include "hierstab/percolation.hpp"
#include "hierstab/product_space.hpp"
#include "hierstab/rng.hpp"
