#pragma once

#include <cstdint>
#include <vector>

#include "mfce/model.hpp"

namespace mfce {

inline constexpr std::int64_t kDefaultEnumerationCap = 1'000'000;

// Z-prefix indexing: the prefix z_0..z_{t-1} is the base-|Z| number
// kappa_t with z_0 most significant; kappa_{t+1} = kappa_t * |Z| + z_t.
struct PrefixSpace {
  int num_signals = 1;
  int steps = 0;  // horizon + 1

  std::int64_t count(int t) const {
    std::int64_t n = 1;
    for (int i = 0; i < t; ++i) n *= num_signals;
    return n;
  }
  std::int64_t child(std::int64_t kappa, int z) const { return kappa * num_signals + z; }
  std::vector<int> digits(std::int64_t kappa, int t) const {
    std::vector<int> zs(t);
    for (int i = t - 1; i >= 0; --i) {
      zs[i] = static_cast<int>(kappa % num_signals);
      kappa /= num_signals;
    }
    return zs;
  }
  // Throws EnumerationTooLarge when |Z|^steps exceeds the cap.
  void check_cap(std::int64_t cap = kDefaultEnumerationCap) const;
};

// Population mean field per time step and z-prefix, mu keyed by kappa.
struct MeanFieldChain {
  PrefixSpace space;
  std::vector<std::vector<Vec>> mu;  // mu[t][kappa]

  const Vec& at(int t, std::int64_t kappa) const { return mu[t][kappa]; }
};

MeanFieldChain build_mean_field_chain(const MfgModel& model, const BehavioralPolicy& pi_pop,
                                      const CorrelationDevice& rho,
                                      std::int64_t cap = kDefaultEnumerationCap);

// Probability of each prefix under the device: probs[t][kappa] = prod rho_i(z_i).
std::vector<std::vector<double>> prefix_probabilities(const MfgModel& model,
                                                      const CorrelationDevice& rho);

// States a (possibly deviating) agent can occupy at each t: supp(mu0), then
// closure under kernel supports along positive-probability prefixes.
std::vector<std::vector<char>> reachable_states(const MfgModel& model,
                                                const MeanFieldChain& chain,
                                                const std::vector<std::vector<double>>& prefix_probs);

}  // namespace mfce
