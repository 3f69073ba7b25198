#pragma once

// Umbrella header for the SFM library: mergeable, differentially private
// distinct-count sketches with randomized-response noise, randomized and
// deterministic merges over noisy bits, and composite-likelihood
// cardinality estimation.

#include "sfm/error.hpp"
#include "sfm/estimate.hpp"
#include "sfm/ingest.hpp"
#include "sfm/mechanism.hpp"
#include "sfm/merge.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/random.hpp"
#include "sfm/serialize.hpp"
#include "sfm/simulate.hpp"
#include "sfm/sketch.hpp"
#include "sfm/xxhash64.hpp"
