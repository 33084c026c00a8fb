#pragma once

#include "fclip/analysis.hpp"
#include "fclip/calibrators.hpp"
#include "fclip/datastore.hpp"
#include "fclip/error.hpp"
#include "fclip/matrix.hpp"
#include "fclip/metrics.hpp"
#include "fclip/optimize.hpp"
#include "fclip/quadrature.hpp"
#include "fclip/rng.hpp"
#include "fclip/special.hpp"
#include "fclip/synthetic.hpp"
#include "fclip/theory.hpp"
