#pragma once

#include "ompath/error.hpp"
#include "ompath/rng.hpp"
#include "ompath/levy.hpp"
#include "ompath/model.hpp"
#include "ompath/path.hpp"
#include "ompath/action.hpp"
#include "ompath/euler_lagrange.hpp"
#include "ompath/bvp.hpp"
#include "ompath/simulate.hpp"
#include "ompath/io.hpp"
#include "ompath/benchmark.hpp"
