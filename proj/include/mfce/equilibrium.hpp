#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfce/mean_field.hpp"
#include "mfce/model.hpp"
#include "mfce/prefix.hpp"

namespace mfce {

// Action values q[t][kappa][s][a][z], with the mean field keyed by the
// z-prefix kappa (z_0..z_{t-1}) through the population flow.
struct QTable {
  PrefixSpace space;
  int num_states = 0, num_actions = 0, num_signals = 0;
  std::vector<Vec> values;  // one flat array per t

  double at(int t, std::int64_t kappa, int s, int a, int z) const {
    return values[t][((kappa * num_states + s) * num_actions + a) * num_signals + z];
  }
  double& at(int t, std::int64_t kappa, int s, int a, int z) {
    return values[t][((kappa * num_states + s) * num_actions + a) * num_signals + z];
  }
};

struct QOptions {
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

// Bellman backward induction: Q_t = r + gamma E_{z',s',a'}[Q_{t+1}] with the
// next prefix kappa.z and a' ~ pi_agent.
QTable compute_q(const MfgModel& model, const BehavioralPolicy& pi_agent,
                 const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                 const QOptions& opts = {});

// Optimal variant: the max over a' sits inside the expectation over (z', s').
QTable compute_q_star(const MfgModel& model, const BehavioralPolicy& pi_pop,
                      const CorrelationDevice& rho, const QOptions& opts = {});

// Swap function u: A -> A stored as an index array.
using SwapFunction = std::vector<int>;

// Delta for one swap at (t, s, prefix): E_{z~rho_t, a~pi_t(.|s,z)}[Q(u(a)) - Q(a)].
double deviation_gain(const QTable& q, const CorrelationDevice& rho,
                      const BehavioralPolicy& pi, int t, int s, std::int64_t z_prefix,
                      const SwapFunction& u);

struct Witness {
  int t = -1;
  std::int64_t z_prefix = 0;
  int state = -1;
  int recommended = -1;
  int deviation = -1;
  SwapFunction swap;  // filled in time-shared mode
};

struct VerificationReport {
  bool is_equilibrium = false;
  double max_gain = 0.0;
  Witness witness;
  double tolerance = 0.0;
};

struct VerifyOptions {
  double tolerance = 1e-9;
  bool all_states = false;   // include deviator-unreachable states
  bool time_shared = false;  // absent-minded games: persistent swaps scored by J
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

// Exhaustive swap-deviation check. In the default mode single-action swaps
// (a -> a') suffice by linearity of Delta in the per-action choices; in
// time-shared mode all |A|^|A| swaps are applied persistently and scored as
// J(u o pi, pi, rho) - J(pi, pi, rho).
VerificationReport verify_amfce(const MfgModel& model, const BehavioralPolicy& pi,
                                const CorrelationDevice& rho, const VerifyOptions& opts = {});

// Greedy policy from Q*: per (t, z, s) argmax of the prefix-posterior-weighted
// optimal values, prefixes weighted by the population occupancy at (t, s).
// Ties break to the lowest action index.
BehavioralPolicy best_response(const MfgModel& model, const BehavioralPolicy& pi_pop,
                               const CorrelationDevice& rho, const QOptions& opts = {});

enum class DampingSchedule { kConstant, kHarmonic };

struct SolveOptions {
  int max_iters = 500;
  double damping = 0.1;                                   // constant-mode step
  DampingSchedule schedule = DampingSchedule::kHarmonic;  // harmonic: 1/(k+2)
  double tolerance = 1e-6;
  std::optional<BehavioralPolicy> init;
  std::string log_csv;  // per-iteration max_gain log, empty = no log
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

struct SolveResult {
  BehavioralPolicy policy;
  VerificationReport report;
  int iterations = 0;
  bool converged = false;
};

// Damped best-response fixed point; on non-convergence returns the best
// iterate by max_gain with its report.
SolveResult solve_amfce_fixed_point(const MfgModel& model, const CorrelationDevice& rho,
                                    const SolveOptions& opts = {});

// Corollary-1 embedding: replicate a signal-free policy across num_signals
// signals and pair it with the Dirac device on z=0.
std::pair<BehavioralPolicy, CorrelationDevice> embed_mfne(const BehavioralPolicy& pi_mfne,
                                                          int num_signals);

struct CipOptions {
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

// R(a_{0:T}, pi, rho): forced-action expected return minus J(pi, pi, rho).
double compute_cip(const MfgModel& model, const BehavioralPolicy& pi,
                   const CorrelationDevice& rho, std::span<const int> action_seq,
                   const CipOptions& opts = {});

struct MaxCipResult {
  double value = 0.0;
  std::vector<int> witness;
};

// Exhaustive maximum over the |A|^{T+1} action sequences.
MaxCipResult max_cip(const MfgModel& model, const BehavioralPolicy& pi,
                     const CorrelationDevice& rho, const CipOptions& opts = {});

struct DualIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
};

// Theorem-2 check: lhs sums the sequence likelihoods under pi_star against the
// per-sequence forced-return gap (conditioned on the same z-sequence);
// rhs = J(pi_star, pi, rho) - J(pi, pi, rho).
DualIdentity verify_dual_identity(const MfgModel& model, const BehavioralPolicy& pi,
                                  const BehavioralPolicy& pi_star, const CorrelationDevice& rho,
                                  const CipOptions& opts = {});

}  // namespace mfce
