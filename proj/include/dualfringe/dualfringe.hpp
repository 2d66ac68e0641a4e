#pragma once
// Everything except the INI config layer, which pulls in Boost.

#include "dualfringe/analysis.hpp"
#include "dualfringe/constants.hpp"
#include "dualfringe/dual_pipeline.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/fringe_fit.hpp"
#include "dualfringe/io.hpp"
#include "dualfringe/parallel.hpp"
#include "dualfringe/phase_core.hpp"
#include "dualfringe/stability.hpp"
#include "dualfringe/synthesizer.hpp"
#include "dualfringe/tide.hpp"
