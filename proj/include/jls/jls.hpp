#pragma once

#include "jls/analytics.hpp"
#include "jls/calibration.hpp"
#include "jls/date.hpp"
#include "jls/error.hpp"
#include "jls/lppl.hpp"
#include "jls/random.hpp"
#include "jls/report.hpp"
#include "jls/sim.hpp"
#include "jls/stats.hpp"
#include "jls/timeseries.hpp"
