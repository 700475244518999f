#pragma once

#include "breachradar/baselines.hpp"
#include "breachradar/common.hpp"
#include "breachradar/detector.hpp"
#include "breachradar/engine.hpp"
#include "breachradar/eval.hpp"
#include "breachradar/graph.hpp"
#include "breachradar/graph_io.hpp"
#include "breachradar/results_io.hpp"
#include "breachradar/synth.hpp"
