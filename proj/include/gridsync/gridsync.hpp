#pragma once

#include "csv.hpp"
#include "errors.hpp"
#include "inverter.hpp"
#include "lowpass.hpp"
#include "nco.hpp"
#include "pid.hpp"
#include "pll.hpp"
#include "runner.hpp"
#include "scenario.hpp"
#include "signal.hpp"
#include "timebase.hpp"
#include "zcd.hpp"
