#pragma once

#include "mvlab/coupling.hpp"
#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/homogenize.hpp"
#include "mvlab/io.hpp"
#include "mvlab/particles.hpp"
#include "mvlab/pde.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/rng.hpp"
#include "mvlab/special.hpp"
#include "mvlab/stationary.hpp"
#include "mvlab/stats.hpp"
