#pragma once

#include <cstdint>
#include <vector>

#include "mfce/equilibrium.hpp"
#include "mfce/model.hpp"

namespace mfce {

enum class LogLossWeighting { kUniform, kExpertVisitation };

struct LogLossCell {
  int t = 0, s = 0, z = 0;
  double value = 0.0;   // cross-entropy of the recovered row under the expert row
  double weight = 0.0;
};

struct LogLossReport {
  std::vector<LogLossCell> cells;
  std::vector<double> per_signal;  // weighted mean over (t, s) per z
  double scalar = 0.0;             // weighted mean, raw
  double floor = 0.0;              // expert conditional entropy under the same weights
  double excess = 0.0;             // scalar - floor (the KL part)
};

// E_{a ~ pi_exp(.|s,z)}[-log pi_rec(a|s,z)] per cell, aggregated under the
// chosen weighting. Raw log loss is floored by the expert entropy; 'excess'
// carries the divergence alone.
LogLossReport log_loss(const MfgModel& model, const BehavioralPolicy& pi_rec,
                       const BehavioralPolicy& pi_exp, const CorrelationDevice& rho,
                       LogLossWeighting weighting = LogLossWeighting::kExpertVisitation);

struct OccupancyTables {
  PrefixSpace space;
  // state_prefix[t][kappa_t * S + s] = Pr(z_{0:t-1} = kappa, s_t = s)
  std::vector<Vec> state_prefix;
  // state_action[t][(kappa_{t+1} * S + s) * A + a] = Pr(z_{0:t}, s_t, a_t)
  std::vector<Vec> state_action;
};

OccupancyTables compute_occupancy(const MfgModel& model, const BehavioralPolicy& pi,
                                  const CorrelationDevice& rho,
                                  std::int64_t cap = kDefaultEnumerationCap);

// epsilon = sum_t gamma^t JS(eta_t^E, eta_t^pi) over the (s, a, z-prefix)
// occupancies, natural log, without the GAN constant.
double measure_epsilon(const MfgModel& model, const BehavioralPolicy& pi,
                       const BehavioralPolicy& pi_exp, const CorrelationDevice& rho);

// sum_t gamma^t || eta_t^E - eta_t^pi ||_1, the Pinsker-chain left side.
double occupancy_l1_chain(const MfgModel& model, const BehavioralPolicy& pi,
                          const BehavioralPolicy& pi_exp, const CorrelationDevice& rho);

struct BoundParams {
  double reward_lipschitz = 0.0;  // L_R, sup L1-operator norm in mu
  double kernel_lipschitz = 0.0;  // L_P
  double reward_bound = 0.0;      // r_max
  double discount = 1.0;
  int horizon = 0;
  double epsilon = 0.0;
};

// Exact constants from the model's structured mu-dependence (affine rewards,
// dense kernels) or the builder-provided overrides.
BoundParams estimate_bound_params(const MfgModel& model);

double cip_bound(const BoundParams& p);             // Thm. 4
double imitation_gap_bound(const BoundParams& p);   // Cor. 2

struct BoundsReport {
  double epsilon = 0.0;
  double measured_max_cip = 0.0;
  double cip_bound_value = 0.0;
  double measured_gap = 0.0;
  double gap_bound_value = 0.0;
  double pinsker_lhs = 0.0;
  double pinsker_rhs_stated = 0.0;     // 2 sqrt(2 eps T), as stated
  double pinsker_rhs_corrected = 0.0;  // 2 sqrt(2 eps (T+1))
  bool cip_ok = false;
  bool gap_ok = false;
  bool pinsker_ok_stated = false;
  bool pinsker_ok_corrected = false;
};

// Measures epsilon against the expert, max CIP, and the best-response
// imitation gap of pi_rec, and compares each against its theory bound.
BoundsReport check_bounds(const MfgModel& model, const BehavioralPolicy& pi_rec,
                          const BehavioralPolicy& pi_exp, const CorrelationDevice& rho);

}  // namespace mfce
