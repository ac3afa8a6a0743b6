#pragma once

#include "okfeb/approx.hpp"
#include "okfeb/budget.hpp"
#include "okfeb/data.hpp"
#include "okfeb/kernel.hpp"
#include "okfeb/learners.hpp"
#include "okfeb/subspace.hpp"
