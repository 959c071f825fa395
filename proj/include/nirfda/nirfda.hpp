/**
 * @file nirfda.hpp
 * @brief Umbrella header.
 */
#pragma once

#include "nirfda/errors.hpp"
#include "nirfda/basis.hpp"
#include "nirfda/model.hpp"
#include "nirfda/calibrate.hpp"
#include "nirfda/predict.hpp"
#include "nirfda/baselines.hpp"
#include "nirfda/simulate.hpp"
#include "nirfda/io.hpp"
