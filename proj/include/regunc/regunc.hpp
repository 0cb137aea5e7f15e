#pragma once

#include "regunc/errors.hpp"
#include "regunc/gaussian.hpp"
#include "regunc/scores.hpp"
#include "regunc/estimator_ids.hpp"
#include "regunc/quadrature.hpp"
#include "regunc/oracle.hpp"
#include "regunc/estimators.hpp"
#include "regunc/metrics.hpp"
#include "regunc/synthetic.hpp"
#include "regunc/trainer.hpp"
#include "regunc/io.hpp"
#include "regunc/experiments.hpp"
