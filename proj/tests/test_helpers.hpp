#pragma once

#include <random>

#include "mfce/environments.hpp"
#include "mfce/model.hpp"

namespace mfce::testing {

inline BehavioralPolicy random_policy(const MfgModel& m, std::mt19937_64& rng,
                                      double logit_scale = 2.0) {
  BehavioralPolicy pi = BehavioralPolicy::zeros(m.horizon + 1, m.num_signals, m.num_states,
                                                m.num_actions);
  std::normal_distribution<double> normal(0.0, logit_scale);
  for (int t = 0; t <= m.horizon; ++t)
    for (int z = 0; z < m.num_signals; ++z)
      for (int s = 0; s < m.num_states; ++s) {
        auto row = pi.row(t, z, s);
        double mx = -1e300;
        for (auto& v : row) {
          v = normal(rng);
          mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (auto& v : row) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (auto& v : row) v /= sum;
      }
  return pi;
}

inline CorrelationDevice random_device(const MfgModel& m, std::mt19937_64& rng) {
  CorrelationDevice rho = CorrelationDevice::uniform(m.horizon + 1, m.num_signals);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int t = 0; t <= m.horizon; ++t) {
    auto row = rho.row(t);
    double sum = 0.0;
    for (auto& v : row) {
      v = gamma(rng) + 1e-3;
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return rho;
}

// Small random model with a dense kernel and affine reward for property tests.
inline MfgModel random_model(std::mt19937_64& rng, int S = 3, int A = 2, int Z = 2, int T = 2) {
  MfgModel m;
  m.num_states = S;
  m.num_actions = A;
  m.num_signals = Z;
  m.horizon = T;
  std::gamma_distribution<double> gamma(1.0, 1.0);
  m.mu0.assign(S, 0.0);
  double sum = 0.0;
  for (double& v : m.mu0) {
    v = gamma(rng) + 1e-3;
    sum += v;
  }
  for (double& v : m.mu0) v /= sum;
  DenseKernel k{S, A, Vec(static_cast<std::size_t>(S) * A * S, 0.0)};
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double rowsum = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        double v = gamma(rng) + 1e-3;
        k.table[(static_cast<std::size_t>(s) * A + a) * S + sp] = v;
        rowsum += v;
      }
      for (int sp = 0; sp < S; ++sp)
        k.table[(static_cast<std::size_t>(s) * A + a) * S + sp] /= rowsum;
    }
  m.dense_kernel = k;
  AffineReward r{S, A, Vec(static_cast<std::size_t>(S) * A), Vec(static_cast<std::size_t>(S) * A * S)};
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (double& v : r.base) v = unif(rng);
  for (double& v : r.coef) v = unif(rng);
  m.affine_reward = r;
  return m;
}

}  // namespace mfce::testing
