#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfce/environments.hpp"
#include "mfce/model.hpp"
#include "mfce/nets.hpp"
#include "mfce/signature.hpp"

namespace mfce {

// Tabular policy logits theta[t][z][s][a]; the policy is the row softmax.
struct PolicyParams {
  int steps = 0, num_signals = 0, num_states = 0, num_actions = 0;
  Vec theta;

  static PolicyParams zeros(int steps, int num_signals, int num_states, int num_actions);
  BehavioralPolicy policy() const;
  std::size_t index(int t, int z, int s, int a) const {
    return ((static_cast<std::size_t>(t) * num_signals + z) * num_states + s) * num_actions + a;
  }
};

// Device logits phi[t][z]; the device is the per-step softmax.
struct DeviceParams {
  int steps = 0, num_signals = 0;
  Vec phi;

  static DeviceParams zeros(int steps, int num_signals);
  CorrelationDevice device() const;
};

inline constexpr double kDiscClamp = 1e-6;

// Discriminator D(s, a, t, z_{0:t}) with input one-hot(s) + one-hot(a) + t/T
// + signature of the one-hot-lifted signal history. Three 128-wide hidden
// layers, leaky-ReLU, sigmoid output clamped to [kDiscClamp, 1-kDiscClamp].
struct Discriminator {
  int num_states = 0, num_actions = 0, num_signals = 0, horizon = 0, depth = 3;
  Mlp net;

  static Discriminator make(const MfgModel& model, int depth, std::uint64_t seed);
  int input_size() const;
  void build_input(int t, int s, int a, std::span<const int> z_history,
                   std::span<double> out) const;
  double forward(int t, int s, int a, std::span<const int> z_history) const;
};

struct DiscSample {
  int t = 0, s = 0, a = 0;
  std::vector<int> z_history;  // z_0..z_t
};

// One ascent step on E_policy[log D] + E_expert[log(1-D)] minus the
// zero-centered gradient penalty on expert samples. Returns the objective
// value before the step (penalty included).
double discriminator_update(Discriminator& disc, AdamState& opt,
                            std::span<const DiscSample> policy_batch,
                            std::span<const DiscSample> expert_batch, double lr, double gp_coef);

// Analytic gradient of the same objective; exposed for the finite-difference
// oracle. Returns the objective value.
double discriminator_objective_grads(const Discriminator& disc,
                                     std::span<const DiscSample> policy_batch,
                                     std::span<const DiscSample> expert_batch, double gp_coef,
                                     Mlp::Grads& grads);

// Actor-critic reward: -log D, clamped.
double policy_reward(const Discriminator& disc, int t, int s, int a,
                     std::span<const int> z_history);

struct TrainingConfig {
  int iterations = 2000;
  int batch_size = 256;     // trajectories per rollout batch
  int disc_steps = 5;
  double lr_actor = 3e-3;
  double lr_critic = 1e-3;
  double lr_disc = 1e-3;
  double lr_device = 1e-2;
  double gp_coef = 10.0;
  int signature_depth = 3;
  std::uint64_t seed = 0;
  int eval_every = 10;      // history cadence for log-loss / max-cip columns
  bool train_device = true;
};

struct HistoryRow {
  int iter = 0;
  double disc_loss = 0.0;
  double mean_policy_reward = 0.0;
  double log_loss = 0.0;      // raw, vs the evaluation policy when available
  double excess_log_loss = 0.0;
  double max_cip_estimate = 0.0;
};

struct TrainResult {
  PolicyParams policy;
  DeviceParams device;
  Discriminator discriminator;
  std::vector<HistoryRow> history;
};

// Demonstrations in the JSONL trajectory schema, sampled seeded.
DemonstrationSet generate_demonstrations(const MfgModel& model, const BehavioralPolicy& pi,
                                         const CorrelationDevice& rho, int n,
                                         std::uint64_t seed);

// Algorithm-1 loop: rollouts from (theta, phi), inner discriminator steps,
// actor-critic on -log D rewards, device steps by the score-function gradient.
TrainResult train_mfcil(const MfgModel& model, const DemonstrationSet& demos,
                        const TrainingConfig& cfg,
                        const BehavioralPolicy* eval_policy = nullptr,
                        const CorrelationDevice* eval_device = nullptr);

// --- exact-gradient utilities (gradient oracles) ---

// Reward hook r(t, s, a, kappa) with kappa indexing z_{0:t}.
using StepReward = std::function<double(int t, int s, int a, std::int64_t kappa)>;

// Exact J(theta, phi) under a step reward, with analytic gradients d J/d theta
// and d J/d phi, by full (z, s, a)-path enumeration. Small instances only.
double exact_return_gradient(const MfgModel& model, const PolicyParams& theta,
                             const DeviceParams& phi, const StepReward& reward,
                             Vec* grad_theta, Vec* grad_phi);

// Prop.-4 device gradient for one step t and state s against a fixed table
// q(z, a): grad[z'] = rho(z')(c(z') - sum_z rho(z) c(z)), c(z) = E_{a~pi}q(z,a).
Vec device_gradient_fixed_q(std::span<const double> rho_t, std::span<const double> pi_rows,
                            std::span<const double> q, int num_signals, int num_actions);

}  // namespace mfce
