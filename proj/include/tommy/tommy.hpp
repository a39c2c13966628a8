#pragma once

#include "tommy/clock_stats.hpp"
#include "tommy/errors.hpp"
#include "tommy/fair_order.hpp"
#include "tommy/io.hpp"
#include "tommy/online_seq.hpp"
#include "tommy/sim_harness.hpp"
#include "tommy/version.hpp"
