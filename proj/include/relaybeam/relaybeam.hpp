// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relaybeam/errors.hpp"
#include "relaybeam/random.hpp"
#include "relaybeam/channel.hpp"
#include "relaybeam/mobility.hpp"
#include "relaybeam/beams.hpp"
#include "relaybeam/env.hpp"
#include "relaybeam/nn.hpp"
#include "relaybeam/agent.hpp"
#include "relaybeam/baselines.hpp"
#include "relaybeam/parallel.hpp"
#include "relaybeam/harness.hpp"
