#pragma once

#include "channel.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "engine.hpp"
#include "gap.hpp"
#include "matching.hpp"
#include "policies.hpp"
#include "predictor.hpp"
#include "queues.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "simplex.hpp"
#include "traces.hpp"
