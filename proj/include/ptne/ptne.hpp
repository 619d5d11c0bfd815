#pragma once

#include "ptne/conditions.hpp"
#include "ptne/errors.hpp"
#include "ptne/experiments.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"
#include "ptne/mechanism.hpp"
#include "ptne/partition.hpp"
#include "ptne/pe_solver.hpp"
#include "ptne/pyramid.hpp"
#include "ptne/qratio.hpp"
#include "ptne/rng.hpp"
#include "ptne/updates.hpp"
