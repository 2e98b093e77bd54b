#pragma once

// Umbrella header: continuous-time Q-learning testbench.

#include "ctdqn/config.hpp"
#include "ctdqn/dp.hpp"
#include "ctdqn/fit.hpp"
#include "ctdqn/harness.hpp"
#include "ctdqn/io.hpp"
#include "ctdqn/ldp.hpp"
#include "ctdqn/matrix.hpp"
#include "ctdqn/qlearn.hpp"
#include "ctdqn/resnet.hpp"
#include "ctdqn/rng.hpp"
#include "ctdqn/sde.hpp"
