#pragma once

#include "wcf/errors.hpp"
#include "wcf/linalg.hpp"
#include "wcf/signal_model.hpp"
#include "wcf/likelihood.hpp"
#include "wcf/rates.hpp"
#include "wcf/kalman.hpp"
#include "wcf/grid.hpp"
#include "wcf/particle.hpp"
#include "wcf/transport.hpp"
#include "wcf/coupling.hpp"
#include "wcf/smoothing.hpp"
#include "wcf/harness.hpp"
