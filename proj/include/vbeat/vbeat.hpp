#pragma once

#include "vbeat/beatfit.hpp"
#include "vbeat/core.hpp"
#include "vbeat/detection.hpp"
#include "vbeat/dynamics.hpp"
#include "vbeat/experiments.hpp"
#include "vbeat/lsq.hpp"
#include "vbeat/spectra.hpp"
#include "vbeat/units.hpp"
