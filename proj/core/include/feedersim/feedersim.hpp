#pragma once

// Umbrella header.

#include "feedersim/control_curves.hpp"
#include "feedersim/grid_model.hpp"
#include "feedersim/ingest_io.hpp"
#include "feedersim/metrics_report.hpp"
#include "feedersim/powerflow.hpp"
#include "feedersim/sim_engine.hpp"
#include "feedersim/version.hpp"
