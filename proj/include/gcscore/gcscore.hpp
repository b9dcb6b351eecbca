#pragma once

#include "gcscore/analysis.hpp"
#include "gcscore/config.hpp"
#include "gcscore/csv.hpp"
#include "gcscore/dataset.hpp"
#include "gcscore/distributions.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/family.hpp"
#include "gcscore/gcomp.hpp"
#include "gcscore/glm.hpp"
#include "gcscore/inference.hpp"
#include "gcscore/quadrature.hpp"
#include "gcscore/random.hpp"
#include "gcscore/simulation.hpp"
