#pragma once

#include "mitoscan/error.hpp"
#include "mitoscan/core.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/raster.hpp"
#include "mitoscan/drf.hpp"
#include "mitoscan/tissue_mask.hpp"
#include "mitoscan/foi_select.hpp"
#include "mitoscan/ground_truth.hpp"
#include "mitoscan/rng.hpp"
#include "mitoscan/regress_target.hpp"
#include "mitoscan/estimators.hpp"
#include "mitoscan/evaluation.hpp"
#include "mitoscan/synth.hpp"
