#include "mfce/mean_field.hpp"

#include <cmath>

namespace mfce {

void PrefixSpace::check_cap(std::int64_t cap) const {
  double total = std::pow(static_cast<double>(num_signals), static_cast<double>(steps));
  if (total > static_cast<double>(cap))
    throw EnumerationTooLarge("z-prefix enumeration", total, static_cast<double>(cap));
}

MeanFieldChain build_mean_field_chain(const MfgModel& model, const BehavioralPolicy& pi_pop,
                                      const CorrelationDevice& rho, std::int64_t cap) {
  check_consistent(model, pi_pop, rho);
  PrefixSpace space{model.num_signals, model.horizon + 1};
  space.check_cap(cap);
  MeanFieldChain chain{space, {}};
  chain.mu.resize(model.horizon + 1);
  chain.mu[0] = {model.mu0};
  for (int t = 0; t < model.horizon; ++t) {
    std::int64_t n = space.count(t);
    chain.mu[t + 1].assign(n * model.num_signals, Vec());
    for (std::int64_t k = 0; k < n; ++k) {
      MeanField cur{chain.mu[t][k]};
      for (int z = 0; z < model.num_signals; ++z)
        chain.mu[t + 1][space.child(k, z)] =
            propagate_mean_field(cur, pi_pop, t, z, model).probs;
    }
  }
  return chain;
}

std::vector<std::vector<double>> prefix_probabilities(const MfgModel& model,
                                                      const CorrelationDevice& rho) {
  PrefixSpace space{model.num_signals, model.horizon + 1};
  std::vector<std::vector<double>> probs(model.horizon + 2);
  probs[0] = {1.0};
  for (int t = 0; t <= model.horizon; ++t) {
    std::int64_t n = space.count(t);
    probs[t + 1].assign(n * model.num_signals, 0.0);
    for (std::int64_t k = 0; k < n; ++k)
      for (int z = 0; z < model.num_signals; ++z)
        probs[t + 1][space.child(k, z)] = probs[t][k] * rho.prob(t, z);
  }
  return probs;
}

std::vector<std::vector<char>> reachable_states(
    const MfgModel& model, const MeanFieldChain& chain,
    const std::vector<std::vector<double>>& prefix_probs) {
  std::vector<std::vector<char>> reach(model.horizon + 1,
                                       std::vector<char>(model.num_states, 0));
  for (int s = 0; s < model.num_states; ++s) reach[0][s] = model.mu0[s] > 0.0;
  Vec out;
  for (int t = 0; t < model.horizon; ++t) {
    std::int64_t n = chain.space.count(t);
    for (std::int64_t k = 0; k < n; ++k) {
      if (prefix_probs[t][k] <= 0.0) continue;
      for (int s = 0; s < model.num_states; ++s) {
        if (!reach[t][s]) continue;
        for (int a = 0; a < model.num_actions; ++a) {
          model.kernel(s, a, chain.at(t, k), out);
          for (int sp = 0; sp < model.num_states; ++sp)
            if (out[sp] > 0.0) reach[t + 1][sp] = 1;
        }
      }
    }
  }
  return reach;
}

}  // namespace mfce
