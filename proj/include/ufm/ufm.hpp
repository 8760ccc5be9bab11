#pragma once

#include "ufm/calibration.hpp"
#include "ufm/check_suite.hpp"
#include "ufm/closed_form.hpp"
#include "ufm/descent.hpp"
#include "ufm/loss.hpp"
#include "ufm/nc_metrics.hpp"
#include "ufm/problem.hpp"
#include "ufm/spectral.hpp"
#include "ufm/theory.hpp"
