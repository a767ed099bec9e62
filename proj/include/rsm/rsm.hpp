#pragma once

#include "rsm/common.hpp"
#include "rsm/envs/ring.hpp"
#include "rsm/envs/tabular_mdp.hpp"
#include "rsm/gossip/gossip.hpp"
#include "rsm/harness/bench_comm.hpp"
#include "rsm/harness/config.hpp"
#include "rsm/harness/run.hpp"
#include "rsm/harness/verify_theory.hpp"
#include "rsm/mixture/comm_mix.hpp"
#include "rsm/mixture/estimators.hpp"
#include "rsm/mixture/models.hpp"
#include "rsm/nn/autodiff.hpp"
#include "rsm/nn/gaussian_policy.hpp"
#include "rsm/nn/mlp.hpp"
#include "rsm/nn/optim.hpp"
#include "rsm/oracle/adapters.hpp"
#include "rsm/oracle/checks.hpp"
#include "rsm/oracle/instances.hpp"
#include "rsm/oracle/soft_eval.hpp"
#include "rsm/sac/agent.hpp"
#include "rsm/sac/replay_buffer.hpp"
