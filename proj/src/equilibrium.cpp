#include "mfce/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mfce/parallel.hpp"

namespace mfce {

namespace {

QTable alloc_q(const MfgModel& model) {
  QTable q;
  q.space = PrefixSpace{model.num_signals, model.horizon + 1};
  q.num_states = model.num_states;
  q.num_actions = model.num_actions;
  q.num_signals = model.num_signals;
  q.values.resize(model.horizon + 1);
  for (int t = 0; t <= model.horizon; ++t)
    q.values[t].assign(q.space.count(t) * model.num_states * model.num_actions *
                           model.num_signals,
                       0.0);
  return q;
}

// Shared backward induction; `star` switches the continuation between
// a' ~ pi_agent and the per-(s',z') max.
QTable backward_induction(const MfgModel& model, const BehavioralPolicy* pi_agent,
                          const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                          bool star, const QOptions& opts) {
  check_consistent(model, pi_pop, rho);
  if (pi_agent) check_consistent(model, *pi_agent, rho);
  MeanFieldChain chain = build_mean_field_chain(model, pi_pop, rho, opts.enumeration_cap);
  QTable q = alloc_q(model);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;

  // Terminal slice: Q_T = r for every z.
  parallel_for(q.space.count(T), [&](std::int64_t k) {
    const Vec& mu = chain.at(T, k);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double r = model.reward(s, a, mu);
        for (int z = 0; z < Z; ++z) q.at(T, k, s, a, z) = r;
      }
  });

  for (int t = T - 1; t >= 0; --t) {
    parallel_for(q.space.count(t), [&](std::int64_t k) {
      const Vec& mu = chain.at(t, k);
      Vec krow;
      std::vector<double> cont(S);
      for (int z = 0; z < Z; ++z) {
        std::int64_t nk = q.space.child(k, z);
        for (int sp = 0; sp < S; ++sp) {
          double c = 0.0;
          for (int zp = 0; zp < Z; ++zp) {
            double w = rho.prob(t + 1, zp);
            if (w == 0.0) continue;
            double v;
            if (star) {
              v = q.at(t + 1, nk, sp, 0, zp);
              for (int ap = 1; ap < A; ++ap)
                v = std::max(v, q.at(t + 1, nk, sp, ap, zp));
            } else {
              v = 0.0;
              for (int ap = 0; ap < A; ++ap)
                v += pi_agent->prob(t + 1, zp, sp, ap) * q.at(t + 1, nk, sp, ap, zp);
            }
            c += w * v;
          }
          cont[sp] = c;
        }
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a) {
            model.kernel(s, a, mu, krow);
            double e = 0.0;
            for (int sp = 0; sp < S; ++sp) e += krow[sp] * cont[sp];
            q.at(t, k, s, a, z) = model.reward(s, a, mu) + model.discount * e;
          }
      }
    });
  }
  return q;
}

}  // namespace

QTable compute_q(const MfgModel& model, const BehavioralPolicy& pi_agent,
                 const BehavioralPolicy& pi_pop, const CorrelationDevice& rho,
                 const QOptions& opts) {
  return backward_induction(model, &pi_agent, pi_pop, rho, false, opts);
}

QTable compute_q_star(const MfgModel& model, const BehavioralPolicy& pi_pop,
                      const CorrelationDevice& rho, const QOptions& opts) {
  return backward_induction(model, nullptr, pi_pop, rho, true, opts);
}

double deviation_gain(const QTable& q, const CorrelationDevice& rho,
                      const BehavioralPolicy& pi, int t, int s, std::int64_t z_prefix,
                      const SwapFunction& u) {
  if (static_cast<int>(u.size()) != q.num_actions)
    throw DimensionMismatch("deviation_gain: swap size != |A|");
  if (z_prefix < 0 || z_prefix >= q.space.count(t))
    throw DimensionMismatch("deviation_gain: prefix out of range");
  double gain = 0.0;
  for (int z = 0; z < q.num_signals; ++z) {
    double rz = rho.prob(t, z);
    if (rz == 0.0) continue;
    for (int a = 0; a < q.num_actions; ++a) {
      if (u[a] < 0 || u[a] >= q.num_actions) throw DomainError("deviation_gain: swap out of range");
      double w = rz * pi.prob(t, z, s, a);
      if (w == 0.0) continue;
      gain += w * (q.at(t, z_prefix, s, u[a], z) - q.at(t, z_prefix, s, a, z));
    }
  }
  return gain;
}

namespace {

VerificationReport verify_time_shared(const MfgModel& model, const BehavioralPolicy& pi,
                                      const CorrelationDevice& rho, const VerifyOptions& opts) {
  // Persistent swap deviations: the agent applies u at every step (it cannot
  // condition on the time index). Scored exactly through expected_return.
  const int A = model.num_actions;
  double total = std::pow(static_cast<double>(A), static_cast<double>(A));
  if (total > 4096.0)
    throw EnumerationTooLarge("time-shared swap enumeration", total, 4096.0);
  ReturnOptions ropts{opts.enumeration_cap};
  double j0 = expected_return(model, pi, pi, rho, ropts);
  VerificationReport rep;
  rep.tolerance = opts.tolerance;
  rep.max_gain = -std::numeric_limits<double>::infinity();
  SwapFunction u(A, 0);
  std::int64_t n = static_cast<std::int64_t>(total);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::int64_t rem = idx;
    bool identity = true;
    for (int a = 0; a < A; ++a) {
      u[a] = static_cast<int>(rem % A);
      rem /= A;
      identity = identity && u[a] == a;
    }
    double gain = identity ? 0.0
                           : expected_return(model, pushforward_policy(pi, u), pi, rho, ropts) - j0;
    if (gain > rep.max_gain) {
      rep.max_gain = gain;
      rep.witness.swap = u;
      rep.witness.t = -1;
      rep.witness.state = -1;
    }
  }
  rep.is_equilibrium = rep.max_gain <= opts.tolerance;
  return rep;
}

}  // namespace

VerificationReport verify_amfce(const MfgModel& model, const BehavioralPolicy& pi,
                                const CorrelationDevice& rho, const VerifyOptions& opts) {
  check_consistent(model, pi, rho);
  if (opts.time_shared) return verify_time_shared(model, pi, rho, opts);

  QTable q = compute_q(model, pi, pi, rho, QOptions{opts.enumeration_cap});
  MeanFieldChain chain = build_mean_field_chain(model, pi, rho, opts.enumeration_cap);
  auto pprob = prefix_probabilities(model, rho);
  auto reach = reachable_states(model, chain, pprob);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;

  VerificationReport rep;
  rep.tolerance = opts.tolerance;
  rep.max_gain = -std::numeric_limits<double>::infinity();
  for (int t = 0; t <= model.horizon; ++t) {
    std::int64_t n = q.space.count(t);
    // Per-prefix maxima computed in parallel, reduced in fixed order.
    std::vector<double> best(n, -std::numeric_limits<double>::infinity());
    std::vector<std::array<int, 3>> arg(n, {-1, -1, -1});
    parallel_for(n, [&](std::int64_t k) {
      if (pprob[t][k] <= 0.0) return;
      for (int s = 0; s < S; ++s) {
        if (!opts.all_states && !reach[t][s]) continue;
        for (int a = 0; a < A; ++a) {
          double w = 0.0;
          for (int z = 0; z < Z; ++z) w += rho.prob(t, z) * pi.prob(t, z, s, a);
          if (w == 0.0) continue;
          for (int a2 = 0; a2 < A; ++a2) {
            double gain = 0.0;
            for (int z = 0; z < Z; ++z) {
              double wz = rho.prob(t, z) * pi.prob(t, z, s, a);
              if (wz == 0.0) continue;
              gain += wz * (q.at(t, k, s, a2, z) - q.at(t, k, s, a, z));
            }
            if (gain > best[k]) {
              best[k] = gain;
              arg[k] = {s, a, a2};
            }
          }
        }
      }
    });
    for (std::int64_t k = 0; k < n; ++k) {
      if (best[k] > rep.max_gain) {
        rep.max_gain = best[k];
        rep.witness = {t, k, arg[k][0], arg[k][1], arg[k][2], {}};
      }
    }
  }
  rep.is_equilibrium = rep.max_gain <= opts.tolerance;
  return rep;
}

BehavioralPolicy best_response(const MfgModel& model, const BehavioralPolicy& pi_pop,
                               const CorrelationDevice& rho, const QOptions& opts) {
  QTable q = compute_q_star(model, pi_pop, rho, opts);
  MeanFieldChain chain = build_mean_field_chain(model, pi_pop, rho, opts.enumeration_cap);
  auto pprob = prefix_probabilities(model, rho);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;

  // Population state occupancy per prefix: weight for aggregating Q* at (t,s).
  std::vector<std::vector<Vec>> occ(T + 1);  // occ[t][kappa][s], conditional on prefix
  occ[0] = {model.mu0};
  for (int t = 0; t < T; ++t) {
    std::int64_t n = chain.space.count(t);
    occ[t + 1].assign(n * Z, Vec(S, 0.0));
    for (std::int64_t k = 0; k < n; ++k) {
      Vec krow;
      for (int z = 0; z < Z; ++z) {
        Vec& nxt = occ[t + 1][chain.space.child(k, z)];
        for (int s = 0; s < S; ++s) {
          if (occ[t][k][s] == 0.0) continue;
          for (int a = 0; a < A; ++a) {
            double w = occ[t][k][s] * pi_pop.prob(t, z, s, a);
            if (w == 0.0) continue;
            model.kernel(s, a, chain.at(t, k), krow);
            for (int sp = 0; sp < S; ++sp) nxt[sp] += w * krow[sp];
          }
        }
      }
    }
  }

  BehavioralPolicy br = BehavioralPolicy::zeros(T + 1, Z, S, A);
  for (int t = 0; t <= T; ++t) {
    std::int64_t n = chain.space.count(t);
    for (int s = 0; s < S; ++s) {
      // occupancy posterior over prefixes given (t, s); falls back to the
      // prefix prior when the state is unreachable.
      Vec w(n, 0.0);
      double tot = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        w[k] = pprob[t][k] * occ[t][k][s];
        tot += w[k];
      }
      if (tot <= 0.0) {
        for (std::int64_t k = 0; k < n; ++k) w[k] = pprob[t][k];
        tot = 1.0;
      }
      for (int z = 0; z < Z; ++z) {
        int best_a = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
          double v = 0.0;
          for (std::int64_t k = 0; k < n; ++k)
            if (w[k] > 0.0) v += w[k] * q.at(t, k, s, a, z);
          v /= tot;
          if (v > best_v) {
            best_v = v;
            best_a = a;  // strict > keeps the lowest index on ties
          }
        }
        br.row(t, z, s)[best_a] = 1.0;
      }
    }
  }
  return br;
}

SolveResult solve_amfce_fixed_point(const MfgModel& model, const CorrelationDevice& rho,
                                    const SolveOptions& opts) {
  BehavioralPolicy pi = opts.init ? *opts.init
                                  : BehavioralPolicy::uniform(model.horizon + 1, model.num_signals,
                                                              model.num_states, model.num_actions);
  check_consistent(model, pi, rho);
  std::ofstream log;
  if (!opts.log_csv.empty()) {
    log.open(opts.log_csv);
    log << "iter,max_gain\n";
  }
  VerifyOptions vopts;
  vopts.tolerance = opts.tolerance;
  vopts.enumeration_cap = opts.enumeration_cap;

  SolveResult out;
  out.report.max_gain = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= opts.max_iters; ++it) {
    VerificationReport rep = verify_amfce(model, pi, rho, vopts);
    if (log.is_open()) log << it << "," << rep.max_gain << "\n";
    if (rep.max_gain < out.report.max_gain) {
      out.report = rep;
      out.policy = pi;
    }
    out.iterations = it;
    if (rep.is_equilibrium) {
      out.converged = true;
      out.policy = pi;
      out.report = rep;
      break;
    }
    if (it == opts.max_iters) break;
    BehavioralPolicy br = best_response(model, pi, rho, QOptions{opts.enumeration_cap});
    double alpha = opts.schedule == DampingSchedule::kConstant ? opts.damping
                                                               : 1.0 / static_cast<double>(it + 2);
    for (std::size_t i = 0; i < pi.table.size(); ++i)
      pi.table[i] = (1.0 - alpha) * pi.table[i] + alpha * br.table[i];
  }
  if (!out.converged)
    std::fprintf(stderr, "mfce: fixed point did not reach tol %.1e (best max_gain %.3e)\n",
                 opts.tolerance, out.report.max_gain);
  return out;
}

std::pair<BehavioralPolicy, CorrelationDevice> embed_mfne(const BehavioralPolicy& pi_mfne,
                                                          int num_signals) {
  BehavioralPolicy pi = BehavioralPolicy::zeros(pi_mfne.steps, num_signals, pi_mfne.num_states,
                                                pi_mfne.num_actions);
  for (int t = 0; t < pi_mfne.steps; ++t)
    for (int z = 0; z < num_signals; ++z)
      for (int s = 0; s < pi_mfne.num_states; ++s) pi.set_row(t, z, s, pi_mfne.row(t, 0, s));
  return {pi, CorrelationDevice::dirac(pi_mfne.steps, num_signals, 0)};
}

double compute_cip(const MfgModel& model, const BehavioralPolicy& pi,
                   const CorrelationDevice& rho, std::span<const int> action_seq,
                   const CipOptions& opts) {
  if (static_cast<int>(action_seq.size()) != model.horizon + 1)
    throw DimensionMismatch("cip: action sequence length != T+1");
  double j0 = expected_return(model, pi, pi, rho, ReturnOptions{opts.enumeration_cap});
  PrefixSpace space{model.num_signals, model.horizon + 1};
  space.check_cap(opts.enumeration_cap);
  const int S = model.num_states, Z = model.num_signals, T = model.horizon;
  std::int64_t nseq = space.count(T + 1);
  std::vector<double> vals(nseq, 0.0);
  parallel_for(nseq, [&](std::int64_t idx) {
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
      int a = action_seq[t];
      for (int s = 0; s < S; ++s)
        if (d[s] > 0.0) val += g * d[s] * model.reward(s, a, mu);
      if (t < T) {
        std::fill(nextd.begin(), nextd.end(), 0.0);
        for (int s = 0; s < S; ++s) {
          if (d[s] == 0.0) continue;
          model.kernel(s, a, mu, krow);
          for (int sp = 0; sp < S; ++sp) nextd[sp] += d[s] * krow[sp];
        }
        d = nextd;
        mu = propagate_mean_field(MeanField{mu}, pi, t, zs[t], model).probs;
      }
      g *= model.discount;
    }
    vals[idx] = w * val;
  });
  double total = 0.0;
  for (double v : vals) total += v;
  return total - j0;
}

MaxCipResult max_cip(const MfgModel& model, const BehavioralPolicy& pi,
                     const CorrelationDevice& rho, const CipOptions& opts) {
  const int A = model.num_actions, T = model.horizon;
  double count = std::pow(static_cast<double>(A), static_cast<double>(T + 1));
  if (count > static_cast<double>(opts.enumeration_cap))
    throw EnumerationTooLarge("action-sequence enumeration", count,
                              static_cast<double>(opts.enumeration_cap));
  std::int64_t n = static_cast<std::int64_t>(count);
  std::vector<double> vals(n);
  parallel_for(n, [&](std::int64_t idx) {
    std::vector<int> aseq(T + 1);
    std::int64_t rem = idx;
    for (int t = T; t >= 0; --t) {
      aseq[t] = static_cast<int>(rem % A);
      rem /= A;
    }
    vals[idx] = compute_cip(model, pi, rho, aseq, opts);
  });
  MaxCipResult out;
  out.value = -std::numeric_limits<double>::infinity();
  std::int64_t best = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (vals[i] > out.value) {
      out.value = vals[i];
      best = i;
    }
  out.witness.assign(T + 1, 0);
  for (int t = T; t >= 0; --t) {
    out.witness[t] = static_cast<int>(best % A);
    best /= A;
  }
  return out;
}

DualIdentity verify_dual_identity(const MfgModel& model, const BehavioralPolicy& pi,
                                  const BehavioralPolicy& pi_star, const CorrelationDevice& rho,
                                  const CipOptions& opts) {
  check_consistent(model, pi, rho);
  check_consistent(model, pi_star, rho);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  PrefixSpace space{Z, T + 1};
  space.check_cap(opts.enumeration_cap);
  double naseq = std::pow(static_cast<double>(A), static_cast<double>(T + 1));
  double total = naseq * static_cast<double>(space.count(T + 1));
  if (total > static_cast<double>(opts.enumeration_cap))
    throw EnumerationTooLarge("(z,a)-sequence enumeration", total,
                              static_cast<double>(opts.enumeration_cap));

  double j0 = expected_return(model, pi, pi, rho, ReturnOptions{opts.enumeration_cap});
  std::int64_t nz = space.count(T + 1);
  std::int64_t na = static_cast<std::int64_t>(naseq);
  std::vector<double> parts(nz, 0.0);
  parallel_for(nz, [&](std::int64_t zidx) {
    std::vector<int> zs(T + 1);
    std::int64_t rem = zidx;
    for (int t = T; t >= 0; --t) {
      zs[t] = static_cast<int>(rem % Z);
      rem /= Z;
    }
    double w = 1.0;
    for (int t = 0; t <= T; ++t) w *= rho.prob(t, zs[t]);
    if (w == 0.0) return;
    // Population flow along this z-sequence.
    std::vector<Vec> mus(T + 1);
    mus[0] = model.mu0;
    for (int t = 0; t < T; ++t)
      mus[t + 1] = propagate_mean_field(MeanField{mus[t]}, pi, t, zs[t], model).probs;

    double acc = 0.0;
    std::vector<int> aseq(T + 1);
    Vec g(S), gn(S), d(S), dn(S), krow;
    for (std::int64_t aidx = 0; aidx < na; ++aidx) {
      std::int64_t arem = aidx;
      for (int t = T; t >= 0; --t) {
        aseq[t] = static_cast<int>(arem % A);
        arem /= A;
      }
      // Pr(a-seq | z-seq) under the pi_star rollout, marginalizing states.
      g = model.mu0;
      for (int t = 0; t <= T; ++t) {
        for (int s = 0; s < S; ++s) g[s] *= pi_star.prob(t, zs[t], s, aseq[t]);
        if (t < T) {
          std::fill(gn.begin(), gn.end(), 0.0);
          for (int s = 0; s < S; ++s) {
            if (g[s] == 0.0) continue;
            model.kernel(s, aseq[t], mus[t], krow);
            for (int sp = 0; sp < S; ++sp) gn[sp] += g[s] * krow[sp];
          }
          g = gn;
        }
      }
      double pa = 0.0;
      for (int s = 0; s < S; ++s) pa += g[s];
      if (pa == 0.0) continue;
      // Forced return for this (z-seq, a-seq), states re-rolled.
      d = model.mu0;
      double val = 0.0, disc = 1.0;
      for (int t = 0; t <= T; ++t) {
        for (int s = 0; s < S; ++s)
          if (d[s] > 0.0) val += disc * d[s] * model.reward(s, aseq[t], mus[t]);
        if (t < T) {
          std::fill(dn.begin(), dn.end(), 0.0);
          for (int s = 0; s < S; ++s) {
            if (d[s] == 0.0) continue;
            model.kernel(s, aseq[t], mus[t], krow);
            for (int sp = 0; sp < S; ++sp) dn[sp] += d[s] * krow[sp];
          }
          d = dn;
        }
        disc *= model.discount;
      }
      acc += pa * (val - j0);
    }
    parts[zidx] = w * acc;
  });
  DualIdentity out;
  for (double p : parts) out.lhs += p;
  out.rhs = expected_return(model, pi_star, pi, rho, ReturnOptions{opts.enumeration_cap}) - j0;
  return out;
}

}  // namespace mfce
