#pragma once

#include "core.hpp"
#include "rng.hpp"
#include "parallel.hpp"
#include "moduli.hpp"
#include "state.hpp"
#include "transport.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "simulate.hpp"
#include "control.hpp"
#include "coupling.hpp"
#include "wellposed.hpp"
#include "harnack.hpp"
#include "config.hpp"
#include "cli.hpp"
