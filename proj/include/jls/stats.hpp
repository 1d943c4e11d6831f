#pragma once

#include "jls/stats/bootstrap.hpp"
#include "jls/stats/unit_root.hpp"
#include "jls/stats/wilks.hpp"
