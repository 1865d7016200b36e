#pragma once

/// Umbrella header for the mact library.

#include "mact/config.hpp"
#include "mact/dual.hpp"
#include "mact/errors.hpp"
#include "mact/experiments.hpp"
#include "mact/integrator.hpp"
#include "mact/mismatch.hpp"
#include "mact/mpc.hpp"
#include "mact/parallel.hpp"
#include "mact/reference_path.hpp"
#include "mact/report.hpp"
#include "mact/shooting.hpp"
#include "mact/tightening.hpp"
#include "mact/vehicle_models.hpp"
