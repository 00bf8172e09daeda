#pragma once

#include "gridstab/case_model.hpp"
#include "gridstab/dynamics.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/format.hpp"
#include "gridstab/linearization.hpp"
#include "gridstab/planner.hpp"
#include "gridstab/powerflow.hpp"
#include "gridstab/reduced_network.hpp"
#include "gridstab/reduction.hpp"
#include "gridstab/report.hpp"
