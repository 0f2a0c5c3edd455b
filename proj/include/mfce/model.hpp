#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfce/errors.hpp"

namespace mfce {

using Vec = std::vector<double>;

// Sum check: within kSumTol passes, within kRenormTol renormalizes with a
// warning, beyond that throws InvalidDistribution.
inline constexpr double kSumTol = 1e-12;
inline constexpr double kRenormTol = 1e-9;

void check_distribution(std::span<double> probs, const std::string& where);

struct MeanField {
  Vec probs;
  int size() const { return static_cast<int>(probs.size()); }
  double operator[](int s) const { return probs[s]; }
};

MeanField make_mean_field(Vec probs, const std::string& where = "mean field");

// Dense mu-independent kernel table p[s][a][s'].
struct DenseKernel {
  int num_states = 0, num_actions = 0;
  Vec table;
  double p(int s, int a, int sp) const {
    return table[(static_cast<std::size_t>(s) * num_actions + a) * num_states + sp];
  }
};

// Reward affine in the mean field: r(s,a,mu) = base[s][a] + coef[s][a] . mu.
struct AffineReward {
  int num_states = 0, num_actions = 0;
  Vec base;   // [s][a]
  Vec coef;   // [s][a][s']
  double eval(int s, int a, const Vec& mu) const {
    double r = base[static_cast<std::size_t>(s) * num_actions + a];
    const double* c = &coef[(static_cast<std::size_t>(s) * num_actions + a) * num_states];
    for (int sp = 0; sp < num_states; ++sp) r += c[sp] * mu[sp];
    return r;
  }
};

using KernelFn = std::function<void(int s, int a, const Vec& mu, Vec& out)>;
using RewardFn = std::function<double(int s, int a, const Vec& mu)>;

// Finite-horizon mean-field game. Spaces are index based; names live in the
// side registries and matter only for IO.
struct MfgModel {
  int num_states = 0;
  int num_actions = 0;
  int num_signals = 1;
  int horizon = 0;           // time indices 0..horizon
  double discount = 1.0;
  Vec mu0;

  std::optional<DenseKernel> dense_kernel;  // set when mu-independent
  KernelFn kernel_fn;                       // set for custom kernels
  std::optional<AffineReward> affine_reward;
  RewardFn reward_fn;

  // Exact constants for the theory bounds when the reward/kernel is not in
  // the structured forms above. Builders fill these.
  std::optional<double> reward_lipschitz_override;
  std::optional<double> reward_bound_override;
  std::optional<double> kernel_lipschitz_override;

  std::vector<std::string> state_names, action_names, signal_names;
  std::string kernel_builtin, reward_builtin;  // names for serialization

  void kernel(int s, int a, const Vec& mu, Vec& out) const;
  double reward(int s, int a, const Vec& mu) const;
  void validate() const;
};

// Per-step tables pi[t][z][s] -> distribution over actions.
struct BehavioralPolicy {
  int steps = 0;  // horizon + 1
  int num_signals = 0, num_states = 0, num_actions = 0;
  Vec table;

  static BehavioralPolicy uniform(int steps, int num_signals, int num_states, int num_actions);
  static BehavioralPolicy zeros(int steps, int num_signals, int num_states, int num_actions);

  std::size_t row_index(int t, int z, int s) const {
    return ((static_cast<std::size_t>(t) * num_signals + z) * num_states + s) *
           num_actions;
  }
  double prob(int t, int z, int s, int a) const { return table[row_index(t, z, s) + a]; }
  std::span<double> row(int t, int z, int s) {
    return {table.data() + row_index(t, z, s), static_cast<std::size_t>(num_actions)};
  }
  std::span<const double> row(int t, int z, int s) const {
    return {table.data() + row_index(t, z, s), static_cast<std::size_t>(num_actions)};
  }
  void set_row(int t, int z, int s, std::span<const double> p);
  void validate() const;
};

// Per-step distributions rho[t] over the signal space.
struct CorrelationDevice {
  int steps = 0;
  int num_signals = 0;
  Vec table;

  static CorrelationDevice uniform(int steps, int num_signals);
  static CorrelationDevice dirac(int steps, int num_signals, int z = 0);

  double prob(int t, int z) const {
    return table[static_cast<std::size_t>(t) * num_signals + z];
  }
  std::span<double> row(int t) {
    return {table.data() + static_cast<std::size_t>(t) * num_signals,
            static_cast<std::size_t>(num_signals)};
  }
  std::span<const double> row(int t) const {
    return {table.data() + static_cast<std::size_t>(t) * num_signals,
            static_cast<std::size_t>(num_signals)};
  }
  void validate() const;
};

struct TrajectoryStep {
  int t = 0, s = 0, z = 0, a = 0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;       // length horizon+1
  std::vector<Vec> mean_fields;            // realized population flow, same length
};

using DemonstrationSet = std::vector<Trajectory>;

void check_consistent(const MfgModel& model, const BehavioralPolicy& pi,
                      const CorrelationDevice& rho);

}  // namespace mfce
