#pragma once

// Umbrella header.

#include "driqn/baselines.hpp"
#include "driqn/common.hpp"
#include "driqn/compare.hpp"
#include "driqn/config.hpp"
#include "driqn/distrl.hpp"
#include "driqn/dro.hpp"
#include "driqn/harness.hpp"
#include "driqn/metrics.hpp"
#include "driqn/noise.hpp"
#include "driqn/qnet.hpp"
#include "driqn/optim.hpp"
#include "driqn/render.hpp"
#include "driqn/replay.hpp"
#include "driqn/rng.hpp"
#include "driqn/world.hpp"
