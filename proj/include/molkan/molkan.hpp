#pragma once

// Umbrella include.

#include "molkan/bench.hpp"
#include "molkan/bspline.hpp"
#include "molkan/dataset.hpp"
#include "molkan/experiment.hpp"
#include "molkan/grad_check.hpp"
#include "molkan/io.hpp"
#include "molkan/kan.hpp"
#include "molkan/metrics.hpp"
#include "molkan/molgraph.hpp"
#include "molkan/mpnn.hpp"
#include "molkan/optim.hpp"
#include "molkan/rng.hpp"
#include "molkan/smiles.hpp"
#include "molkan/synthetic.hpp"
#include "molkan/tensor.hpp"
#include "molkan/training.hpp"
#include "molkan/verify.hpp"
