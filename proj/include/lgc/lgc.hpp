// lgc.hpp: umbrella header.

#pragma once

#include "lgc/bangbang.hpp"
#include "lgc/lie.hpp"
#include "lgc/linalg.hpp"
#include "lgc/model.hpp"
#include "lgc/rule.hpp"
#include "lgc/sim.hpp"
#include "lgc/spectral.hpp"
#include "lgc/synth.hpp"
