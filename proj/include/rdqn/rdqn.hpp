#ifndef RDQN_RDQN_HPP
#define RDQN_RDQN_HPP

#include "rdqn/error.hpp"
#include "rdqn/policy.hpp"
#include "rdqn/replay.hpp"
#include "rdqn/returns.hpp"
#include "rdqn/qfunc.hpp"
#include "rdqn/envs.hpp"
#include "rdqn/agent.hpp"
#include "rdqn/experiment.hpp"

#endif  // RDQN_RDQN_HPP
