#pragma once

#include "svemp/coefficients.hpp"
#include "svemp/diagnostics.hpp"
#include "svemp/errors.hpp"
#include "svemp/kernels.hpp"
#include "svemp/martingale.hpp"
#include "svemp/philox.hpp"
#include "svemp/quadrature.hpp"
#include "svemp/stats.hpp"
#include "svemp/sve_engine.hpp"
