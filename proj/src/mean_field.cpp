#include "mfce/mean_field.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "mfce/parallel.hpp"

namespace mfce {

namespace {

int sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  int last = 0;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

MeanField propagate_mean_field(const MeanField& mu, const BehavioralPolicy& pi, int t, int z,
                               const MfgModel& model) {
  if (mu.size() != model.num_states) throw DimensionMismatch("propagate: mu size != |S|");
  if (z < 0 || z >= model.num_signals) throw DomainError("propagate: signal index out of range");
  if (pi.num_states != model.num_states || pi.num_actions != model.num_actions)
    throw DimensionMismatch("propagate: policy slice does not match model");
  Vec next(model.num_states, 0.0);
  Vec row;
  for (int s = 0; s < model.num_states; ++s) {
    if (mu[s] == 0.0) continue;
    for (int a = 0; a < model.num_actions; ++a) {
      double w = mu[s] * pi.prob(t, z, s, a);
      if (w == 0.0) continue;
      model.kernel(s, a, mu.probs, row);
      for (int sp = 0; sp < model.num_states; ++sp) next[sp] += w * row[sp];
    }
  }
  return make_mean_field(std::move(next), "propagated mean field");
}

MeanField make_mean_field(Vec probs, const std::string& where) {
  check_distribution(probs, where);
  return MeanField{std::move(probs)};
}

Vec predict_signal_posterior(std::span<const double> rho_t, const BehavioralPolicy& pi, int t,
                             int s, int a) {
  int Z = static_cast<int>(rho_t.size());
  if (Z != pi.num_signals) throw DimensionMismatch("posterior: device/policy signal mismatch");
  Vec post(Z, 0.0);
  double denom = 0.0;
  for (int z = 0; z < Z; ++z) {
    post[z] = rho_t[z] * pi.prob(t, z, s, a);
    denom += post[z];
  }
  if (denom <= 0.0)
    throw ZeroProbabilityObservation("posterior: recommendation has zero probability");
  for (double& p : post) p /= denom;
  return post;
}

Trajectory sample_trajectory(const MfgModel& model, const BehavioralPolicy& pi,
                             const CorrelationDevice& rho, std::uint64_t seed) {
  check_consistent(model, pi, rho);
  std::mt19937_64 rng(seed);
  Trajectory traj;
  traj.steps.reserve(model.horizon + 1);
  traj.mean_fields.reserve(model.horizon + 1);
  Vec mu = model.mu0;
  int s = sample_index(model.mu0, rng);
  Vec row;
  for (int t = 0; t <= model.horizon; ++t) {
    int z = sample_index(rho.row(t), rng);
    int a = sample_index(pi.row(t, z, s), rng);
    traj.steps.push_back({t, s, z, a});
    traj.mean_fields.push_back(mu);
    if (t < model.horizon) {
      model.kernel(s, a, mu, row);
      s = sample_index(row, rng);
      mu = propagate_mean_field(MeanField{mu}, pi, t, z, model).probs;
    }
  }
  return traj;
}

double trajectory_return(const MfgModel& model, const Trajectory& traj) {
  double total = 0.0, g = 1.0;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& st = traj.steps[i];
    total += g * model.reward(st.s, st.a, traj.mean_fields[i]);
    g *= model.discount;
  }
  return total;
}

double expected_return(const MfgModel& model, const BehavioralPolicy& pi_agent,
                       const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                       const ReturnOptions& opts) {
  check_consistent(model, pi_agent, rho);
  check_consistent(model, pi_pop, rho);
  PrefixSpace space{model.num_signals, model.horizon + 1};
  space.check_cap(opts.enumeration_cap);

  // Recursive descent over z-sequences; the per-sequence pass is O(T S A S).
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  double total = 0.0;
  Vec row;
  // Iterative enumeration over full z-sequences keeps the mu/d stacks explicit.
  std::int64_t nseq = 1;
  for (int t = 0; t <= T; ++t) nseq *= Z;
  std::vector<double> seq_vals(nseq, 0.0);
  parallel_for(nseq, [&](std::int64_t idx) {
    // decode digits z_0..z_T
    std::vector<int> zs(T + 1);
    std::int64_t rem = idx;
    for (int t = T; t >= 0; --t) {
      zs[t] = static_cast<int>(rem % Z);
      rem /= Z;
    }
    double w = 1.0;
    for (int t = 0; t <= T; ++t) w *= rho.prob(t, zs[t]);
    if (w == 0.0) return;
    Vec mu = model.mu0, d = model.mu0, nextd(S), krow;
    double val = 0.0, g = 1.0;
    for (int t = 0; t <= T; ++t) {
      int z = zs[t];
      for (int s = 0; s < S; ++s) {
        if (d[s] == 0.0) continue;
        for (int a = 0; a < A; ++a) {
          double p = pi_agent.prob(t, z, s, a);
          if (p > 0.0) val += g * d[s] * p * model.reward(s, a, mu);
        }
      }
      if (t < T) {
        std::fill(nextd.begin(), nextd.end(), 0.0);
        for (int s = 0; s < S; ++s) {
          if (d[s] == 0.0) continue;
          for (int a = 0; a < A; ++a) {
            double p = d[s] * pi_agent.prob(t, z, s, a);
            if (p == 0.0) continue;
            model.kernel(s, a, mu, krow);
            for (int sp = 0; sp < S; ++sp) nextd[sp] += p * krow[sp];
          }
        }
        d = nextd;
        mu = propagate_mean_field(MeanField{mu}, pi_pop, t, z, model).probs;
      }
      g *= model.discount;
    }
    seq_vals[idx] = w * val;
  });
  for (std::int64_t i = 0; i < nseq; ++i) total += seq_vals[i];
  return total;
}

McEstimate expected_return_mc(const MfgModel& model, const BehavioralPolicy& pi_agent,
                              const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                              std::int64_t num_samples, std::uint64_t seed) {
  // The agent chain re-rolls its own (z,a,s) path; the population flow is
  // replayed from the same z draws via the trajectory's stored mean fields.
  std::vector<double> vals(num_samples, 0.0);
  parallel_for(num_samples, [&](std::int64_t i) {
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec mu = model.mu0, row;
    auto draw = [&](std::span<const double> p) {
      double u = unif(rng), acc = 0.0;
      int last = 0;
      for (int j = 0; j < static_cast<int>(p.size()); ++j) {
        if (p[j] <= 0.0) continue;
        acc += p[j];
        last = j;
        if (u < acc) return j;
      }
      return last;
    };
    int s = draw(model.mu0);
    double val = 0.0, g = 1.0;
    for (int t = 0; t <= model.horizon; ++t) {
      int z = draw(rho.row(t));
      int a = draw(pi_agent.row(t, z, s));
      val += g * model.reward(s, a, mu);
      if (t < model.horizon) {
        model.kernel(s, a, mu, row);
        s = draw(row);
        mu = propagate_mean_field(MeanField{mu}, pi_pop, t, z, model).probs;
      }
      g *= model.discount;
    }
    vals[i] = val;
  });
  McEstimate est;
  est.samples = num_samples;
  double sum = 0.0, sq = 0.0;
  for (double v : vals) sum += v;
  est.mean = sum / static_cast<double>(num_samples);
  for (double v : vals) sq += (v - est.mean) * (v - est.mean);
  est.std_error = std::sqrt(sq / (static_cast<double>(num_samples) *
                                  std::max<double>(1.0, static_cast<double>(num_samples - 1))));
  return est;
}

BehavioralPolicy pushforward_policy(const BehavioralPolicy& pi, std::span<const int> swap) {
  if (static_cast<int>(swap.size()) != pi.num_actions)
    throw DimensionMismatch("pushforward: swap size != |A|");
  BehavioralPolicy out = BehavioralPolicy::zeros(pi.steps, pi.num_signals, pi.num_states,
                                                 pi.num_actions);
  for (int t = 0; t < pi.steps; ++t)
    for (int z = 0; z < pi.num_signals; ++z)
      for (int s = 0; s < pi.num_states; ++s) {
        auto src = pi.row(t, z, s);
        auto dst = out.row(t, z, s);
        for (int a = 0; a < pi.num_actions; ++a) dst[swap[a]] += src[a];
      }
  return out;
}

}  // namespace mfce
