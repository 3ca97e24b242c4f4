#pragma once

#include "discat/error.hpp"
#include "discat/tables.hpp"
#include "discat/disparity.hpp"
#include "discat/normal.hpp"
#include "discat/model.hpp"
#include "discat/polychoric.hpp"
#include "discat/appendix.hpp"
#include "discat/optimizer.hpp"
#include "discat/estimator.hpp"
#include "discat/inference.hpp"
#include "discat/multivariate.hpp"
#include "discat/parallel.hpp"
#include "discat/simulate.hpp"
