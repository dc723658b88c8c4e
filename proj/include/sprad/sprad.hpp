// sprad.hpp -- single-photon radiometry toolkit, umbrella header.
#pragma once

#include "sprad/calibration.hpp"
#include "sprad/correlation.hpp"
#include "sprad/deadtime_models.hpp"
#include "sprad/detectors.hpp"
#include "sprad/errors.hpp"
#include "sprad/least_squares.hpp"
#include "sprad/sources.hpp"
#include "sprad/stability.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"
