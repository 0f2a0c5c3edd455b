#pragma once

#include "mfce/equilibrium.hpp"

namespace mfce::reference {

// Serial reference implementations kept for testing and benchmarking against
// the parallel kernels. Plain nested loops, no parallel_for, no shared
// scratch; results must match the main kernels to the last bit given the
// fixed reduction orders.

QTable compute_q(const MfgModel& model, const BehavioralPolicy& pi_agent,
                 const BehavioralPolicy& pi_pop, const CorrelationDevice& rho);

MaxCipResult max_cip(const MfgModel& model, const BehavioralPolicy& pi,
                     const CorrelationDevice& rho);

double expected_return(const MfgModel& model, const BehavioralPolicy& pi_agent,
                       const BehavioralPolicy& pi_pop, const CorrelationDevice& rho);

}  // namespace mfce::reference
