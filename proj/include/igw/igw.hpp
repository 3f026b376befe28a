#pragma once
/// @file igw.hpp
/// @brief Umbrella header for the whole library.

#include "igw/cloud.hpp"
#include "igw/coupling.hpp"
#include "igw/distance.hpp"
#include "igw/dynamics.hpp"
#include "igw/error.hpp"
#include "igw/format.hpp"
#include "igw/functionals.hpp"
#include "igw/gradient_flow.hpp"
#include "igw/io.hpp"
#include "igw/linalg.hpp"
#include "igw/mobility.hpp"
#include "igw/ot.hpp"
#include "igw/shapes.hpp"
#include "igw/trajectory.hpp"
