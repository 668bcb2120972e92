#pragma once

#include "dtc/circuit_model.hpp"
#include "dtc/toy_model.hpp"
#include "dtc/zz_analysis.hpp"
#include "dtc/pulse_shaping.hpp"
#include "dtc/gate_dynamics.hpp"
#include "dtc/calibration_optim.hpp"
#include "dtc/noise_channels.hpp"
#include "dtc/benchmarking.hpp"
#include "dtc/tomography.hpp"
