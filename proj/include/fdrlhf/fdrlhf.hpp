#pragma once

#include "fdrlhf/algorithms.hpp"
#include "fdrlhf/checks.hpp"
#include "fdrlhf/constants.hpp"
#include "fdrlhf/divergence.hpp"
#include "fdrlhf/env.hpp"
#include "fdrlhf/errors.hpp"
#include "fdrlhf/experiment.hpp"
#include "fdrlhf/policy.hpp"
#include "fdrlhf/reward.hpp"
#include "fdrlhf/root_finding.hpp"
#include "fdrlhf/uncertainty.hpp"
#include "fdrlhf/value.hpp"
