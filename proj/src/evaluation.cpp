#include "mfce/evaluation.hpp"

#include <cmath>

#include "mfce/mean_field.hpp"

namespace mfce {

LogLossReport log_loss(const MfgModel& model, const BehavioralPolicy& pi_rec,
                       const BehavioralPolicy& pi_exp, const CorrelationDevice& rho,
                       LogLossWeighting weighting) {
  check_consistent(model, pi_rec, rho);
  check_consistent(model, pi_exp, rho);
  OccupancyTables occ = compute_occupancy(model, pi_exp, rho);
  const int S = model.num_states, Z = model.num_signals, T = model.horizon;

  LogLossReport rep;
  rep.per_signal.assign(Z, 0.0);
  Vec wz(Z, 0.0);
  double wsum = 0.0;
  for (int t = 0; t <= T; ++t) {
    // expert state visitation at t, prefixes marginalized
    Vec visit(S, 0.0);
    std::int64_t n = occ.space.count(t);
    for (std::int64_t k = 0; k < n; ++k)
      for (int s = 0; s < S; ++s) visit[s] += occ.state_prefix[t][k * S + s];
    for (int z = 0; z < Z; ++z)
      for (int s = 0; s < S; ++s) {
        double w = weighting == LogLossWeighting::kUniform ? 1.0 : visit[s] * rho.prob(t, z);
        if (w <= 0.0) continue;
        double ce = 0.0, ent = 0.0;
        for (int a = 0; a < model.num_actions; ++a) {
          double pe = pi_exp.prob(t, z, s, a);
          if (pe <= 0.0) continue;
          ce -= pe * std::log(std::max(pi_rec.prob(t, z, s, a), 1e-300));
          ent -= pe * std::log(pe);
        }
        rep.cells.push_back({t, s, z, ce, w});
        rep.per_signal[z] += w * ce;
        wz[z] += w;
        rep.scalar += w * ce;
        rep.floor += w * ent;
        wsum += w;
      }
  }
  for (int z = 0; z < Z; ++z) rep.per_signal[z] = wz[z] > 0 ? rep.per_signal[z] / wz[z] : 0.0;
  if (wsum > 0) {
    rep.scalar /= wsum;
    rep.floor /= wsum;
  }
  rep.excess = rep.scalar - rep.floor;
  return rep;
}

OccupancyTables compute_occupancy(const MfgModel& model, const BehavioralPolicy& pi,
                                  const CorrelationDevice& rho, std::int64_t cap) {
  check_consistent(model, pi, rho);
  MeanFieldChain chain = build_mean_field_chain(model, pi, rho, cap);
  auto pprob = prefix_probabilities(model, rho);
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;

  OccupancyTables occ;
  occ.space = chain.space;
  occ.state_prefix.resize(T + 1);
  occ.state_action.resize(T + 1);

  // conditional state distribution given the prefix, then scaled by prefix prob
  std::vector<Vec> cond(T + 1);
  cond[0] = model.mu0;
  for (int t = 0; t < T; ++t) {
    std::int64_t n = chain.space.count(t);
    cond[t + 1].assign(n * Z * S, 0.0);
    Vec krow;
    for (std::int64_t k = 0; k < n; ++k)
      for (int z = 0; z < Z; ++z) {
        std::int64_t nk = chain.space.child(k, z);
        for (int s = 0; s < S; ++s) {
          double base = cond[t][k * S + s];
          if (base == 0.0) continue;
          for (int a = 0; a < A; ++a) {
            double w = base * pi.prob(t, z, s, a);
            if (w == 0.0) continue;
            model.kernel(s, a, chain.at(t, k), krow);
            for (int sp = 0; sp < S; ++sp) cond[t + 1][(nk * S) + sp] += w * krow[sp];
          }
        }
      }
  }
  for (int t = 0; t <= T; ++t) {
    std::int64_t n = chain.space.count(t);
    occ.state_prefix[t].assign(n * S, 0.0);
    for (std::int64_t k = 0; k < n; ++k)
      for (int s = 0; s < S; ++s)
        occ.state_prefix[t][k * S + s] = pprob[t][k] * cond[t][k * S + s];
    occ.state_action[t].assign(n * Z * S * A, 0.0);
    for (std::int64_t k = 0; k < n; ++k)
      for (int z = 0; z < Z; ++z)
        for (int s = 0; s < S; ++s) {
          double base = pprob[t][k] * rho.prob(t, z) * cond[t][k * S + s];
          if (base == 0.0) continue;
          for (int a = 0; a < A; ++a)
            occ.state_action[t][((chain.space.child(k, z) * S) + s) * A + a] =
                base * pi.prob(t, z, s, a);
        }
  }
  return occ;
}

namespace {

double js_divergence(const Vec& p, const Vec& q) {
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return js;
}

}  // namespace

double measure_epsilon(const MfgModel& model, const BehavioralPolicy& pi,
                       const BehavioralPolicy& pi_exp, const CorrelationDevice& rho) {
  OccupancyTables a = compute_occupancy(model, pi, rho);
  OccupancyTables b = compute_occupancy(model, pi_exp, rho);
  double eps = 0.0, g = 1.0;
  for (int t = 0; t <= model.horizon; ++t) {
    eps += g * js_divergence(b.state_action[t], a.state_action[t]);
    g *= model.discount;
  }
  return eps;
}

double occupancy_l1_chain(const MfgModel& model, const BehavioralPolicy& pi,
                          const BehavioralPolicy& pi_exp, const CorrelationDevice& rho) {
  OccupancyTables a = compute_occupancy(model, pi, rho);
  OccupancyTables b = compute_occupancy(model, pi_exp, rho);
  double total = 0.0, g = 1.0;
  for (int t = 0; t <= model.horizon; ++t) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.state_action[t].size(); ++i)
      l1 += std::fabs(a.state_action[t][i] - b.state_action[t][i]);
    total += g * l1;
    g *= model.discount;
  }
  return total;
}

BoundParams estimate_bound_params(const MfgModel& model) {
  BoundParams p;
  p.discount = model.discount;
  p.horizon = model.horizon;
  if (model.reward_lipschitz_override) {
    p.reward_lipschitz = *model.reward_lipschitz_override;
  } else if (model.affine_reward) {
    // L1-operator norm of an affine map is the max |coefficient|.
    for (double c : model.affine_reward->coef)
      p.reward_lipschitz = std::max(p.reward_lipschitz, std::fabs(c));
  } else {
    throw DomainError("estimate_bound_params: no reward structure or override");
  }
  if (model.reward_bound_override) {
    p.reward_bound = *model.reward_bound_override;
  } else if (model.affine_reward) {
    // |affine| over the simplex peaks at a vertex.
    const auto& r = *model.affine_reward;
    for (int s = 0; s < model.num_states; ++s)
      for (int a = 0; a < model.num_actions; ++a)
        for (int sp = 0; sp < model.num_states; ++sp) {
          double v = r.base[static_cast<std::size_t>(s) * model.num_actions + a] +
                     r.coef[(static_cast<std::size_t>(s) * model.num_actions + a) *
                                model.num_states +
                            sp];
          p.reward_bound = std::max(p.reward_bound, std::fabs(v));
        }
  }
  if (model.kernel_lipschitz_override)
    p.kernel_lipschitz = *model.kernel_lipschitz_override;
  else if (model.dense_kernel)
    p.kernel_lipschitz = 0.0;  // mu-independent
  else
    throw DomainError("estimate_bound_params: no kernel structure or override");
  return p;
}

double cip_bound(const BoundParams& p) {
  double root = std::sqrt(2.0 * p.epsilon * p.horizon);
  return 2.0 * (2.0 * p.reward_lipschitz + p.reward_bound +
                p.discount * p.horizon * p.kernel_lipschitz * p.reward_bound) *
         root;
}

double imitation_gap_bound(const BoundParams& p) {
  double root = std::sqrt(2.0 * p.epsilon * p.horizon);
  return 2.0 * (3.0 * p.reward_lipschitz +
                p.discount * p.horizon * p.kernel_lipschitz * p.reward_bound + p.reward_bound) *
         root;
}

BoundsReport check_bounds(const MfgModel& model, const BehavioralPolicy& pi_rec,
                          const BehavioralPolicy& pi_exp, const CorrelationDevice& rho) {
  BoundsReport rep;
  BoundParams p = estimate_bound_params(model);
  p.epsilon = rep.epsilon = measure_epsilon(model, pi_rec, pi_exp, rho);
  rep.measured_max_cip = max_cip(model, pi_rec, rho).value;
  rep.cip_bound_value = cip_bound(p);
  BehavioralPolicy br = best_response(model, pi_rec, rho);
  rep.measured_gap = expected_return(model, br, pi_rec, rho) -
                     expected_return(model, pi_rec, pi_rec, rho);
  rep.gap_bound_value = imitation_gap_bound(p);
  rep.pinsker_lhs = occupancy_l1_chain(model, pi_rec, pi_exp, rho);
  rep.pinsker_rhs_stated = 2.0 * std::sqrt(2.0 * rep.epsilon * model.horizon);
  rep.pinsker_rhs_corrected = 2.0 * std::sqrt(2.0 * rep.epsilon * (model.horizon + 1));
  rep.cip_ok = rep.measured_max_cip <= rep.cip_bound_value + 1e-12;
  rep.gap_ok = rep.measured_gap <= rep.gap_bound_value + 1e-12;
  rep.pinsker_ok_stated = rep.pinsker_lhs <= rep.pinsker_rhs_stated + 1e-12;
  rep.pinsker_ok_corrected = rep.pinsker_lhs <= rep.pinsker_rhs_corrected + 1e-12;
  return rep;
}

}  // namespace mfce
