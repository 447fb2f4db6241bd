#pragma once

// Umbrella header: the full decomposition toolkit.
#include "hetdecomp/common.hpp"
#include "hetdecomp/stats.hpp"
#include "hetdecomp/model.hpp"
#include "hetdecomp/learners.hpp"
#include "hetdecomp/nuisance.hpp"
#include "hetdecomp/moment_kernel.hpp"
#include "hetdecomp/moments.hpp"
#include "hetdecomp/decomp.hpp"
#include "hetdecomp/hypothesis.hpp"
#include "hetdecomp/oracle.hpp"
#include "hetdecomp/simulate.hpp"
#include "hetdecomp/io.hpp"
