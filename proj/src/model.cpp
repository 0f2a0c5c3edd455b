#include "mfce/model.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace mfce {

void check_distribution(std::span<double> probs, const std::string& where) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvalidDistribution(where + ": negative or non-finite entry");
    sum += p;
  }
  double err = std::fabs(sum - 1.0);
  if (err <= kSumTol) return;
  if (err <= kRenormTol) {
    std::fprintf(stderr, "mfce: renormalizing %s (sum off by %.3e)\n", where.c_str(), err);
    for (double& p : probs) p /= sum;
    return;
  }
  throw InvalidDistribution(where + ": entries sum to " + std::to_string(sum));
}

void MfgModel::kernel(int s, int a, const Vec& mu, Vec& out) const {
  out.assign(num_states, 0.0);
  if (dense_kernel) {
    for (int sp = 0; sp < num_states; ++sp) out[sp] = dense_kernel->p(s, a, sp);
    return;
  }
  kernel_fn(s, a, mu, out);
}

double MfgModel::reward(int s, int a, const Vec& mu) const {
  if (affine_reward) return affine_reward->eval(s, a, mu);
  return reward_fn(s, a, mu);
}

void MfgModel::validate() const {
  if (num_states <= 0 || num_actions <= 0 || num_signals <= 0 || horizon < 0)
    throw DimensionMismatch("model: empty space or negative horizon");
  if (!(discount > 0.0 && discount <= 1.0))
    throw DomainError("model: discount must be in (0, 1]");
  if (static_cast<int>(mu0.size()) != num_states)
    throw DimensionMismatch("model: mu0 size != |S|");
  Vec m = mu0;
  check_distribution(m, "mu0");
  if (!dense_kernel && !kernel_fn) throw DomainError("model: no kernel");
  if (!affine_reward && !reward_fn) throw DomainError("model: no reward");
  // Row-stochasticity spot check at mu0.
  Vec out;
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) {
      kernel(s, a, mu0, out);
      check_distribution(out, "kernel row (s=" + std::to_string(s) +
                                  ", a=" + std::to_string(a) + ")");
    }
}

BehavioralPolicy BehavioralPolicy::uniform(int steps, int num_signals, int num_states,
                                           int num_actions) {
  BehavioralPolicy pi{steps, num_signals, num_states, num_actions, {}};
  pi.table.assign(static_cast<std::size_t>(steps) * num_signals * num_states * num_actions,
                  1.0 / num_actions);
  return pi;
}

BehavioralPolicy BehavioralPolicy::zeros(int steps, int num_signals, int num_states,
                                         int num_actions) {
  BehavioralPolicy pi{steps, num_signals, num_states, num_actions, {}};
  pi.table.assign(static_cast<std::size_t>(steps) * num_signals * num_states * num_actions, 0.0);
  return pi;
}

void BehavioralPolicy::set_row(int t, int z, int s, std::span<const double> p) {
  if (static_cast<int>(p.size()) != num_actions)
    throw DimensionMismatch("policy row size != |A|");
  auto r = row(t, z, s);
  std::copy(p.begin(), p.end(), r.begin());
}

void BehavioralPolicy::validate() const {
  auto* self = const_cast<BehavioralPolicy*>(this);
  for (int t = 0; t < steps; ++t)
    for (int z = 0; z < num_signals; ++z)
      for (int s = 0; s < num_states; ++s)
        check_distribution(self->row(t, z, s),
                           "policy row (t=" + std::to_string(t) + ", z=" + std::to_string(z) +
                               ", s=" + std::to_string(s) + ")");
}

CorrelationDevice CorrelationDevice::uniform(int steps, int num_signals) {
  CorrelationDevice rho{steps, num_signals, {}};
  rho.table.assign(static_cast<std::size_t>(steps) * num_signals, 1.0 / num_signals);
  return rho;
}

CorrelationDevice CorrelationDevice::dirac(int steps, int num_signals, int z) {
  CorrelationDevice rho{steps, num_signals, {}};
  rho.table.assign(static_cast<std::size_t>(steps) * num_signals, 0.0);
  for (int t = 0; t < steps; ++t) rho.table[static_cast<std::size_t>(t) * num_signals + z] = 1.0;
  return rho;
}

void CorrelationDevice::validate() const {
  auto* self = const_cast<CorrelationDevice*>(this);
  for (int t = 0; t < steps; ++t)
    check_distribution(self->row(t), "device row (t=" + std::to_string(t) + ")");
}

void check_consistent(const MfgModel& model, const BehavioralPolicy& pi,
                      const CorrelationDevice& rho) {
  if (pi.steps != model.horizon + 1 || pi.num_signals != model.num_signals ||
      pi.num_states != model.num_states || pi.num_actions != model.num_actions)
    throw DimensionMismatch("policy dimensions do not match model");
  if (rho.steps != model.horizon + 1 || rho.num_signals != model.num_signals)
    throw DimensionMismatch("device dimensions do not match model");
}

}  // namespace mfce
