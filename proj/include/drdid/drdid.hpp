#pragma once

#include "drdid/data.hpp"
#include "drdid/efficiency.hpp"
#include "drdid/error.hpp"
#include "drdid/estimate.hpp"
#include "drdid/inference.hpp"
#include "drdid/io.hpp"
#include "drdid/nuisance.hpp"
#include "drdid/numkit.hpp"
#include "drdid/panel.hpp"
#include "drdid/parallel.hpp"
#include "drdid/rc.hpp"
#include "drdid/report.hpp"
#include "drdid/rng.hpp"
#include "drdid/simulation.hpp"
