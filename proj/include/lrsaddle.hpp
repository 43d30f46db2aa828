#pragma once

#include "lrsaddle/common.hpp"
#include "lrsaddle/lattice.hpp"
#include "lrsaddle/spectral.hpp"
#include "lrsaddle/saddle.hpp"
#include "lrsaddle/observables.hpp"
#include "lrsaddle/oracle.hpp"
#include "lrsaddle/config.hpp"
#include "lrsaddle/io.hpp"
#include "lrsaddle/app.hpp"
