#pragma once

// Umbrella header for the ROPE library: robust post hoc explanations of
// black-box classifiers via adversarial training over a polytope of
// covariate shifts, plus the benchmark harness around them.

#include "rope/bench.hpp"
#include "rope/blackbox.hpp"
#include "rope/dataset.hpp"
#include "rope/explain.hpp"
#include "rope/explanations.hpp"
#include "rope/external.hpp"
#include "rope/linexp.hpp"
#include "rope/log.hpp"
#include "rope/metrics.hpp"
#include "rope/multiexp.hpp"
#include "rope/oracle.hpp"
#include "rope/report.hpp"
#include "rope/rng.hpp"
#include "rope/ruleexp.hpp"
#include "rope/shiftset.hpp"
#include "rope/synthetic.hpp"
