#pragma once

#include "analysis.hpp"
#include "cascade.hpp"
#include "config.hpp"
#include "conic.hpp"
#include "disturbance.hpp"
#include "error.hpp"
#include "freqmodel.hpp"
#include "iirfilter.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "spectrum.hpp"
#include "synthesis.hpp"
