#pragma once

// Umbrella header.

#include "mixar/em.hpp"
#include "mixar/error.hpp"
#include "mixar/experiments.hpp"
#include "mixar/io.hpp"
#include "mixar/model.hpp"
#include "mixar/parallel.hpp"
#include "mixar/random.hpp"
#include "mixar/selection.hpp"
#include "mixar/simulator.hpp"

namespace mixar {
inline constexpr const char* VERSION = "0.1.0";
}
