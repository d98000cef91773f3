#pragma once

#include "mspca/baselines.hpp"
#include "mspca/bench.hpp"
#include "mspca/dataset_io.hpp"
#include "mspca/error.hpp"
#include "mspca/ms_pca.hpp"
#include "mspca/rmt.hpp"
#include "mspca/rng.hpp"
#include "mspca/simulate.hpp"
#include "mspca/spectral.hpp"
