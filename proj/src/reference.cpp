#include "mfce/reference.hpp"

#include <cmath>
#include <limits>

namespace mfce::reference {

namespace {

std::vector<int> decode(std::int64_t idx, int base, int len) {
  std::vector<int> out(len);
  for (int i = len - 1; i >= 0; --i) {
    out[i] = static_cast<int>(idx % base);
    idx /= base;
  }
  return out;
}

}  // namespace

QTable compute_q(const MfgModel& model, const BehavioralPolicy& pi_agent,
                 const BehavioralPolicy& pi_pop, const CorrelationDevice& rho) {
  MeanFieldChain chain = build_mean_field_chain(model, pi_pop, rho);
  QTable q;
  q.space = PrefixSpace{model.num_signals, model.horizon + 1};
  q.num_states = model.num_states;
  q.num_actions = model.num_actions;
  q.num_signals = model.num_signals;
  q.values.resize(model.horizon + 1);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  for (int t = 0; t <= T; ++t)
    q.values[t].assign(q.space.count(t) * S * A * Z, 0.0);

  Vec krow;
  for (std::int64_t k = 0; k < q.space.count(T); ++k)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int z = 0; z < Z; ++z)
          q.at(T, k, s, a, z) = model.reward(s, a, chain.at(T, k));

  for (int t = T - 1; t >= 0; --t)
    for (std::int64_t k = 0; k < q.space.count(t); ++k)
      for (int z = 0; z < Z; ++z)
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a) {
            std::int64_t nk = q.space.child(k, z);
            model.kernel(s, a, chain.at(t, k), krow);
            double e = 0.0;
            for (int sp = 0; sp < S; ++sp) {
              double c = 0.0;
              for (int zp = 0; zp < Z; ++zp) {
                double inner = 0.0;
                for (int ap = 0; ap < A; ++ap)
                  inner += pi_agent.prob(t + 1, zp, sp, ap) * q.at(t + 1, nk, sp, ap, zp);
                c += rho.prob(t + 1, zp) * inner;
              }
              e += krow[sp] * c;
            }
            q.at(t, k, s, a, z) =
                model.reward(s, a, chain.at(t, k)) + model.discount * e;
          }
  return q;
}

double expected_return(const MfgModel& model, const BehavioralPolicy& pi_agent,
                       const BehavioralPolicy& pi_pop, const CorrelationDevice& rho) {
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  std::int64_t nseq = 1;
  for (int t = 0; t <= T; ++t) nseq *= Z;
  double total = 0.0;
  Vec krow;
  for (std::int64_t idx = 0; idx < nseq; ++idx) {
    std::vector<int> zs = decode(idx, Z, T + 1);
    double w = 1.0;
    for (int t = 0; t <= T; ++t) w *= rho.prob(t, zs[t]);
    if (w == 0.0) continue;
    Vec mu = model.mu0, d = model.mu0, nextd(S);
    double val = 0.0, g = 1.0;
    for (int t = 0; t <= T; ++t) {
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          double p = d[s] * pi_agent.prob(t, zs[t], s, a);
          if (p > 0.0) val += g * p * model.reward(s, a, mu);
        }
      if (t < T) {
        std::fill(nextd.begin(), nextd.end(), 0.0);
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a) {
            double p = d[s] * pi_agent.prob(t, zs[t], s, a);
            if (p == 0.0) continue;
            model.kernel(s, a, mu, krow);
            for (int sp = 0; sp < S; ++sp) nextd[sp] += p * krow[sp];
          }
        d = nextd;
        mu = propagate_mean_field(MeanField{mu}, pi_pop, t, zs[t], model).probs;
      }
      g *= model.discount;
    }
    total += w * val;
  }
  return total;
}

MaxCipResult max_cip(const MfgModel& model, const BehavioralPolicy& pi,
                     const CorrelationDevice& rho) {
  const int A = model.num_actions, T = model.horizon;
  std::int64_t n = 1;
  for (int t = 0; t <= T; ++t) n *= A;
  MaxCipResult out;
  out.value = -std::numeric_limits<double>::infinity();
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::vector<int> aseq = decode(idx, A, T + 1);
    double v = compute_cip(model, pi, rho, aseq);
    if (v > out.value) {
      out.value = v;
      out.witness = aseq;
    }
  }
  return out;
}

}  // namespace mfce::reference
