#pragma once

#include "reweight/common.hpp"
#include "reweight/data.hpp"
#include "reweight/harness.hpp"
#include "reweight/independence.hpp"
#include "reweight/io.hpp"
#include "reweight/model.hpp"
#include "reweight/rff.hpp"
#include "reweight/simplex.hpp"
#include "reweight/weights.hpp"
