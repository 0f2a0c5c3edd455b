#pragma once

#include <cstdint>
#include <span>

#include "mfce/model.hpp"
#include "mfce/prefix.hpp"

namespace mfce {

// McKean-Vlasov step: Phi(mu, pi_t, z) = sum_{s,a} mu(s) pi_t(a|s,z) P(.|s,a,mu).
MeanField propagate_mean_field(const MeanField& mu, const BehavioralPolicy& pi, int t, int z,
                               const MfgModel& model);

// Bayes posterior over the signal given a recommendation:
// rho_pred(z) = rho_t(z) pi_t(a|s,z) / sum_z' rho_t(z') pi_t(a|s,z').
// Throws ZeroProbabilityObservation when the denominator is zero.
Vec predict_signal_posterior(std::span<const double> rho_t,
                             const BehavioralPolicy& pi, int t, int s, int a);

Trajectory sample_trajectory(const MfgModel& model, const BehavioralPolicy& pi,
                             const CorrelationDevice& rho, std::uint64_t seed);

// Discounted return of a sampled trajectory, using its stored mean fields.
double trajectory_return(const MfgModel& model, const Trajectory& traj);

struct ReturnOptions {
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

// Exact J(pi_agent, pi_pop, rho) by z-sequence enumeration with the agent's
// state chain propagated in distribution. Throws EnumerationTooLarge past the cap.
double expected_return(const MfgModel& model, const BehavioralPolicy& pi_agent,
                       const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                       const ReturnOptions& opts = {});

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

// Seeded Monte Carlo fallback for instances past the enumeration cap.
McEstimate expected_return_mc(const MfgModel& model, const BehavioralPolicy& pi_agent,
                              const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                              std::int64_t num_samples, std::uint64_t seed);

// Agent policy induced by receiving recommendations from pi and playing u(a).
BehavioralPolicy pushforward_policy(const BehavioralPolicy& pi, std::span<const int> swap);

}  // namespace mfce
