#include "mfce/mfcil.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "mfce/equilibrium.hpp"
#include "mfce/evaluation.hpp"
#include "mfce/mean_field.hpp"
#include "mfce/parallel.hpp"
#include "mfce/prefix.hpp"

namespace mfce {

PolicyParams PolicyParams::zeros(int steps, int num_signals, int num_states, int num_actions) {
  PolicyParams p{steps, num_signals, num_states, num_actions, {}};
  p.theta.assign(static_cast<std::size_t>(steps) * num_signals * num_states * num_actions, 0.0);
  return p;
}

BehavioralPolicy PolicyParams::policy() const {
  BehavioralPolicy pi = BehavioralPolicy::zeros(steps, num_signals, num_states, num_actions);
  for (int t = 0; t < steps; ++t)
    for (int z = 0; z < num_signals; ++z)
      for (int s = 0; s < num_states; ++s) {
        const double* th = &theta[index(t, z, s, 0)];
        auto row = pi.row(t, z, s);
        double mx = th[0];
        for (int a = 1; a < num_actions; ++a) mx = std::max(mx, th[a]);
        double sum = 0.0;
        for (int a = 0; a < num_actions; ++a) {
          row[a] = std::exp(th[a] - mx);
          sum += row[a];
        }
        for (int a = 0; a < num_actions; ++a) row[a] /= sum;
      }
  return pi;
}

DeviceParams DeviceParams::zeros(int steps, int num_signals) {
  DeviceParams d{steps, num_signals, {}};
  d.phi.assign(static_cast<std::size_t>(steps) * num_signals, 0.0);
  return d;
}

CorrelationDevice DeviceParams::device() const {
  CorrelationDevice rho{steps, num_signals, Vec(phi.size(), 0.0)};
  for (int t = 0; t < steps; ++t) {
    const double* ph = &phi[static_cast<std::size_t>(t) * num_signals];
    auto row = rho.row(t);
    double mx = ph[0];
    for (int z = 1; z < num_signals; ++z) mx = std::max(mx, ph[z]);
    double sum = 0.0;
    for (int z = 0; z < num_signals; ++z) {
      row[z] = std::exp(ph[z] - mx);
      sum += row[z];
    }
    for (int z = 0; z < num_signals; ++z) row[z] /= sum;
  }
  return rho;
}

Discriminator Discriminator::make(const MfgModel& model, int depth, std::uint64_t seed) {
  Discriminator d;
  d.num_states = model.num_states;
  d.num_actions = model.num_actions;
  d.num_signals = model.num_signals;
  d.horizon = model.horizon;
  d.depth = depth;
  int in = d.input_size();
  d.net = Mlp::make({in, 128, 128, 128, 1}, Activation::kLeakyRelu, seed);
  return d;
}

int Discriminator::input_size() const {
  return num_states + num_actions + 1 +
         static_cast<int>(signature_dimension(num_signals, depth));
}

void Discriminator::build_input(int t, int s, int a, std::span<const int> z_history,
                                std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  out[s] = 1.0;
  out[num_states + a] = 1.0;
  out[num_states + num_actions] = horizon > 0 ? static_cast<double>(t) / horizon : 0.0;
  Vec sig = embed_signal_history(z_history, num_signals, depth);
  std::copy(sig.begin(), sig.end(), out.begin() + num_states + num_actions + 1);
}

double Discriminator::forward(int t, int s, int a, std::span<const int> z_history) const {
  Vec x(input_size());
  build_input(t, s, a, z_history, x);
  double logit = net.forward_scalar(x);
  double d = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(d, kDiscClamp, 1.0 - kDiscClamp);
}

double policy_reward(const Discriminator& disc, int t, int s, int a,
                     std::span<const int> z_history) {
  return -std::log(disc.forward(t, s, a, z_history));
}

namespace {

// The clamp flattens the log objective outside [kDiscClamp, 1-kDiscClamp];
// gradients there are zero to match finite differences of the clamped value.
double log_d_seed(double d) { return d < kDiscClamp || d > 1.0 - kDiscClamp ? 0.0 : 1.0 - d; }
double log_1md_seed(double d) { return d < kDiscClamp || d > 1.0 - kDiscClamp ? 0.0 : -d; }

}  // namespace

double discriminator_objective_grads(const Discriminator& disc,
                                     std::span<const DiscSample> policy_batch,
                                     std::span<const DiscSample> expert_batch, double gp_coef,
                                     Mlp::Grads& grads) {
  if (policy_batch.empty() || expert_batch.empty())
    throw DomainError("discriminator update: empty batch");
  grads.init_like(disc.net);
  Vec x(disc.input_size());
  Mlp::Cache cache;
  double value = 0.0;
  double wp = 1.0 / static_cast<double>(policy_batch.size());
  for (const DiscSample& smp : policy_batch) {
    disc.build_input(smp.t, smp.s, smp.a, smp.z_history, x);
    double logit = disc.net.forward_cached(x, cache);
    double d = 1.0 / (1.0 + std::exp(-logit));
    value += wp * std::log(std::clamp(d, kDiscClamp, 1.0 - kDiscClamp));
    disc.net.backprop(cache, wp * log_d_seed(d), grads);
  }
  double we = 1.0 / static_cast<double>(expert_batch.size());
  for (const DiscSample& smp : expert_batch) {
    disc.build_input(smp.t, smp.s, smp.a, smp.z_history, x);
    double logit = disc.net.forward_cached(x, cache);
    double d = 1.0 / (1.0 + std::exp(-logit));
    value += we * std::log(std::clamp(1.0 - d, kDiscClamp, 1.0 - kDiscClamp));
    disc.net.backprop(cache, we * log_1md_seed(d), grads);
    if (gp_coef != 0.0) {
      // penalty = gp * mean ||d D/d x||^2, D = sigmoid(logit):
      // per sample sp^2 * ||v||^2 with sp = D(1-D) and v the logit gradient.
      double sp = d * (1.0 - d);
      double norm2 = disc.net.penalty_backprop(cache, -gp_coef * we * sp * sp, grads);
      // d(sp^2)/dlogit = 2 sp^2 (1-2D)
      disc.net.backprop(cache, -gp_coef * we * 2.0 * sp * sp * (1.0 - 2.0 * d) * norm2, grads);
      value -= gp_coef * we * sp * sp * norm2;
    }
  }
  return value;
}

double discriminator_update(Discriminator& disc, AdamState& opt,
                            std::span<const DiscSample> policy_batch,
                            std::span<const DiscSample> expert_batch, double lr, double gp_coef) {
  Mlp::Grads grads;
  double value = discriminator_objective_grads(disc, policy_batch, expert_batch, gp_coef, grads);
  opt.apply(disc.net, grads, lr, /*ascent=*/true);
  return value;
}

DemonstrationSet generate_demonstrations(const MfgModel& model, const BehavioralPolicy& pi,
                                         const CorrelationDevice& rho, int n,
                                         std::uint64_t seed) {
  if (n < 1) throw DomainError("generate_demonstrations: n must be >= 1");
  DemonstrationSet out(n);
  parallel_for(n, [&](std::int64_t i) {
    out[i] = sample_trajectory(model, pi, rho,
                               seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1)));
  });
  return out;
}

namespace {

// Signature features cached per (t, kappa over z_{0:t}).
struct SigCache {
  int num_signals = 1, depth = 3, horizon = 0;
  std::vector<std::vector<Vec>> sig;  // [t][kappa]

  void build(const MfgModel& model, int depth_) {
    num_signals = model.num_signals;
    depth = depth_;
    horizon = model.horizon;
    PrefixSpace space{num_signals, horizon + 1};
    sig.resize(horizon + 1);
    for (int t = 0; t <= horizon; ++t) {
      std::int64_t n = space.count(t + 1);
      sig[t].resize(n);
      for (std::int64_t k = 0; k < n; ++k) {
        auto zs = space.digits(k, t + 1);
        sig[t][k] = embed_signal_history(zs, num_signals, depth);
      }
    }
  }
  const Vec& at(int t, std::int64_t kappa) const { return sig[t][kappa]; }
};

struct Rollout {
  // column-major per trajectory: [traj][step]
  std::vector<std::vector<TrajectoryStep>> steps;
  std::vector<std::vector<std::int64_t>> kappa;   // z_{0:t} index per step
};

Rollout sample_rollouts(const MfgModel& model, const BehavioralPolicy& pi,
                        const CorrelationDevice& rho, int n, std::uint64_t seed) {
  Rollout out;
  out.steps.resize(n);
  out.kappa.resize(n);
  parallel_for(n, [&](std::int64_t i) {
    Trajectory tr = sample_trajectory(
        model, pi, rho, seed ^ (0xd1342543de82ef95ull * static_cast<std::uint64_t>(i + 1)));
    out.steps[i] = tr.steps;
    out.kappa[i].resize(tr.steps.size());
    std::int64_t k = 0;
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      k = t == 0 ? tr.steps[t].z : k * model.num_signals + tr.steps[t].z;
      out.kappa[i][t] = k;
    }
  });
  return out;
}

struct CriticNet {
  int num_states = 0, horizon = 0;
  std::int64_t sig_dim = 0;
  Mlp net;
  AdamState opt;

  void make(const MfgModel& model, int depth, std::uint64_t seed) {
    num_states = model.num_states;
    horizon = model.horizon;
    sig_dim = signature_dimension(model.num_signals, depth);
    net = Mlp::make({num_states + 1 + static_cast<int>(sig_dim), 256, 256, 1},
                    Activation::kRelu, seed);
    opt.init_like(net);
  }
  // input: one-hot state, t/T, signature of z_{0:t-1} (zero vector at t=0).
  void build_input(int t, int s, const Vec* sig_prev, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    out[s] = 1.0;
    out[num_states] = horizon > 0 ? static_cast<double>(t) / horizon : 0.0;
    if (sig_prev)
      std::copy(sig_prev->begin(), sig_prev->end(), out.begin() + num_states + 1);
  }
  double value(int t, int s, const Vec* sig_prev) const {
    Vec x(net.input_size());
    build_input(t, s, sig_prev, x);
    return net.forward_scalar(x);
  }
};

}  // namespace

double exact_return_gradient(const MfgModel& model, const PolicyParams& theta,
                             const DeviceParams& phi, const StepReward& reward,
                             Vec* grad_theta, Vec* grad_phi) {
  BehavioralPolicy pi = theta.policy();
  CorrelationDevice rho = phi.device();
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  if (grad_theta) grad_theta->assign(theta.theta.size(), 0.0);
  if (grad_phi) grad_phi->assign(phi.phi.size(), 0.0);

  // Depth-first enumeration of full (z, s, a) paths with the path weight and
  // the score-function accumulators for theta and phi.
  double total = 0.0;
  std::vector<int> zs(T + 1), ss(T + 1), as(T + 1);
  std::function<void(int, std::int64_t, double, double)> recurse =
      [&](int t, std::int64_t kappa, double weight, double ret) {
        if (weight == 0.0) return;
        if (t > T) {
          total += weight * ret;
          if (grad_theta) {
            for (int i = 0; i <= T; ++i) {
              const double* th = &theta.theta[theta.index(i, zs[i], ss[i], 0)];
              double mx = th[0];
              for (int a = 1; a < A; ++a) mx = std::max(mx, th[a]);
              double sum = 0.0;
              Vec sm(A);
              for (int a = 0; a < A; ++a) {
                sm[a] = std::exp(th[a] - mx);
                sum += sm[a];
              }
              for (int a = 0; a < A; ++a) {
                double g = (a == as[i] ? 1.0 : 0.0) - sm[a] / sum;
                (*grad_theta)[theta.index(i, zs[i], ss[i], a)] += weight * ret * g;
              }
            }
          }
          if (grad_phi) {
            for (int i = 0; i <= T; ++i) {
              const double* ph = &phi.phi[static_cast<std::size_t>(i) * Z];
              double mx = ph[0];
              for (int z = 1; z < Z; ++z) mx = std::max(mx, ph[z]);
              double sum = 0.0;
              Vec sm(Z);
              for (int z = 0; z < Z; ++z) {
                sm[z] = std::exp(ph[z] - mx);
                sum += sm[z];
              }
              for (int z = 0; z < Z; ++z) {
                double g = (z == zs[i] ? 1.0 : 0.0) - sm[z] / sum;
                (*grad_phi)[static_cast<std::size_t>(i) * Z + z] += weight * ret * g;
              }
            }
          }
          return;
        }
        for (int z = 0; z < Z; ++z) {
          double wz = rho.prob(t, z);
          if (wz == 0.0) continue;
          zs[t] = z;
          std::int64_t kz = t == 0 ? z : kappa * Z + z;
          for (int a = 0; a < A; ++a) {
            double wa = pi.prob(t, z, ss[t], a);
            if (wa == 0.0) continue;
            as[t] = a;
            double r = reward(t, ss[t], a, kz);
            double g = 1.0;
            for (int i = 0; i < t; ++i) g *= model.discount;
            if (t == T) {
              recurse(t + 1, kz, weight * wz * wa, ret + g * r);
            } else {
              Vec krow;
              // mean field does not enter the step reward hook; kernels of the
              // bundled environments ignore mu, pass mu0 for custom ones.
              model.kernel(ss[t], a, model.mu0, krow);
              for (int sp = 0; sp < S; ++sp) {
                if (krow[sp] == 0.0) continue;
                ss[t + 1] = sp;
                recurse(t + 1, kz, weight * wz * wa * krow[sp], ret + g * r);
              }
            }
          }
        }
      };
  ss[0] = 0;
  for (int s0 = 0; s0 < S; ++s0) {
    if (model.mu0[s0] == 0.0) continue;
    ss[0] = s0;
    recurse(0, 0, model.mu0[s0], 0.0);
  }
  return total;
}

Vec device_gradient_fixed_q(std::span<const double> rho_t, std::span<const double> pi_rows,
                            std::span<const double> q, int num_signals, int num_actions) {
  Vec c(num_signals, 0.0);
  for (int z = 0; z < num_signals; ++z)
    for (int a = 0; a < num_actions; ++a)
      c[z] += pi_rows[static_cast<std::size_t>(z) * num_actions + a] *
              q[static_cast<std::size_t>(z) * num_actions + a];
  double mean = 0.0;
  for (int z = 0; z < num_signals; ++z) mean += rho_t[z] * c[z];
  Vec grad(num_signals, 0.0);
  for (int z = 0; z < num_signals; ++z) grad[z] = rho_t[z] * (c[z] - mean);
  return grad;
}

TrainResult train_mfcil(const MfgModel& model, const DemonstrationSet& demos,
                        const TrainingConfig& cfg, const BehavioralPolicy* eval_policy,
                        const CorrelationDevice* eval_device) {
  const int S = model.num_states, A = model.num_actions, Z = model.num_signals;
  const int T = model.horizon;
  for (const Trajectory& tr : demos) {
    if (static_cast<int>(tr.steps.size()) != T + 1)
      throw DimensionMismatch("demonstrations do not match the model horizon");
    for (const TrajectoryStep& st : tr.steps)
      if (st.s < 0 || st.s >= S || st.a < 0 || st.a >= A || st.z < 0 || st.z >= Z)
        throw DimensionMismatch("demonstration index out of range");
  }
  if (demos.empty()) throw DomainError("train_mfcil: empty demonstration set");

  TrainResult out;
  out.policy = PolicyParams::zeros(T + 1, Z, S, A);
  out.device = DeviceParams::zeros(T + 1, Z);
  out.discriminator = Discriminator::make(model, cfg.signature_depth, cfg.seed ^ 0xD15Cull);

  CriticNet critic;
  critic.make(model, cfg.signature_depth, cfg.seed ^ 0xC417ull);
  AdamState disc_opt;
  disc_opt.init_like(out.discriminator.net);
  AdamFlat actor_opt, device_opt;
  actor_opt.init(out.policy.theta.size());
  device_opt.init(out.device.phi.size());

  std::mt19937_64 rng(cfg.seed);
  PrefixSpace space{Z, T + 1};

  // The discriminator and critic inputs take finitely many distinct values:
  // (t, z_{0:t}, s, a) and (t, z_{0:t-1}, s). Both feature sets are static, so
  // they are built once and every batch pass runs over weighted distinct
  // tuples instead of raw samples.
  std::vector<std::int64_t> disc_off(T + 2, 0);   // key offset per t
  std::vector<std::int64_t> critic_off(T + 2, 0); // over (t, kappa_prev, s)
  for (int t = 0; t <= T; ++t) {
    disc_off[t + 1] = disc_off[t] + space.count(t + 1) * S * A;
    critic_off[t + 1] = critic_off[t] + space.count(t) * S;
  }
  const std::int64_t n_disc = disc_off[T + 1];
  const std::int64_t n_critic = critic_off[T + 1];
  auto disc_key = [&](int t, std::int64_t kappa, int s, int a) {
    return disc_off[t] + ((kappa * S) + s) * A + a;
  };
  auto critic_key = [&](int t, std::int64_t kprev, int s) {
    return critic_off[t] + kprev * S + s;
  };

  const int disc_in = out.discriminator.input_size();
  const int critic_in = critic.net.input_size();
  Vec disc_inputs(static_cast<std::size_t>(n_disc) * disc_in);
  Vec critic_inputs(static_cast<std::size_t>(n_critic) * critic_in);
  {
    SigCache sigs;
    sigs.build(model, cfg.signature_depth);
    for (int t = 0; t <= T; ++t) {
      std::int64_t nk = space.count(t + 1);
      for (std::int64_t k = 0; k < nk; ++k) {
        auto zh = space.digits(k, t + 1);
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a)
            out.discriminator.build_input(
                t, s, a, zh,
                {&disc_inputs[static_cast<std::size_t>(disc_key(t, k, s, a)) * disc_in],
                 static_cast<std::size_t>(disc_in)});
      }
      std::int64_t np = space.count(t);
      for (std::int64_t k = 0; k < np; ++k) {
        const Vec* sp = t > 0 ? &sigs.at(t - 1, k) : nullptr;
        for (int s = 0; s < S; ++s)
          critic.build_input(
              t, s, sp,
              {&critic_inputs[static_cast<std::size_t>(critic_key(t, k, s)) * critic_in],
               static_cast<std::size_t>(critic_in)});
      }
    }
  }
  auto disc_x = [&](std::int64_t key) {
    return std::span<const double>(&disc_inputs[static_cast<std::size_t>(key) * disc_in],
                                   static_cast<std::size_t>(disc_in));
  };
  auto critic_x = [&](std::int64_t key) {
    return std::span<const double>(&critic_inputs[static_cast<std::size_t>(key) * critic_in],
                                   static_cast<std::size_t>(critic_in));
  };

  // Expert tuple weights over the full demonstration set, fixed for the run.
  Vec expert_w(n_disc, 0.0);
  {
    double unit = 1.0 / (static_cast<double>(demos.size()) * (T + 1));
    for (const Trajectory& tr : demos) {
      std::int64_t k = 0;
      for (int t = 0; t <= T; ++t) {
        k = t == 0 ? tr.steps[t].z : k * Z + tr.steps[t].z;
        expert_w[disc_key(t, k, tr.steps[t].s, tr.steps[t].a)] += unit;
      }
    }
  }

  // Fixed-order grouped reduction keeps results worker-count independent.
  const int kGroups = 16;
  std::vector<std::int64_t> active;          // scratch: active disc keys
  Vec policy_w(n_disc, 0.0);
  Vec disc_value(n_disc, 0.0);               // clamped D per key
  Vec critic_value(n_critic, 0.0);
  std::vector<Mlp::Grads> group_grads(kGroups);

  auto refresh_disc_values = [&]() {
    parallel_for(n_disc, [&](std::int64_t key) {
      double logit = out.discriminator.net.forward_scalar(disc_x(key));
      disc_value[key] = std::clamp(1.0 / (1.0 + std::exp(-logit)), kDiscClamp,
                                   1.0 - kDiscClamp);
    });
  };
  auto refresh_critic_values = [&]() {
    parallel_for(n_critic, [&](std::int64_t key) {
      critic_value[key] = critic.net.forward_scalar(critic_x(key));
    });
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    BehavioralPolicy pi = out.policy.policy();
    CorrelationDevice rho = out.device.device();
    Rollout roll = sample_rollouts(model, pi, rho, cfg.batch_size,
                                   cfg.seed ^ (0x2545f4914f6cdd1dull * (iter + 1)));

    // policy-side tuple weights for this rollout batch
    std::fill(policy_w.begin(), policy_w.end(), 0.0);
    double unit = 1.0 / (static_cast<double>(cfg.batch_size) * (T + 1));
    for (int i = 0; i < cfg.batch_size; ++i)
      for (int t = 0; t <= T; ++t)
        policy_w[disc_key(t, roll.kappa[i][t], roll.steps[i][t].s, roll.steps[i][t].a)] += unit;
    active.clear();
    for (std::int64_t key = 0; key < n_disc; ++key)
      if (policy_w[key] > 0.0 || expert_w[key] > 0.0) active.push_back(key);

    // discriminator: full-batch ascent steps on the weighted tuples
    double disc_loss = 0.0;
    for (int ds = 0; ds < cfg.disc_steps; ++ds) {
      for (auto& g : group_grads) g.init_like(out.discriminator.net);
      Vec group_vals(kGroups, 0.0);
      std::int64_t n_active = static_cast<std::int64_t>(active.size());
      parallel_for(kGroups, [&](std::int64_t g) {
        Mlp::Cache cache;
        for (std::int64_t j = g; j < n_active; j += kGroups) {
          std::int64_t key = active[j];
          double wp = policy_w[key], we = expert_w[key];
          double logit = out.discriminator.net.forward_cached(disc_x(key), cache);
          double d = 1.0 / (1.0 + std::exp(-logit));
          double seed = 0.0;
          if (wp > 0.0) {
            group_vals[g] += wp * std::log(std::clamp(d, kDiscClamp, 1.0 - kDiscClamp));
            seed += wp * log_d_seed(d);
          }
          if (we > 0.0) {
            group_vals[g] += we * std::log(std::clamp(1.0 - d, kDiscClamp, 1.0 - kDiscClamp));
            seed += we * log_1md_seed(d);
            if (cfg.gp_coef != 0.0) {
              double sp = d * (1.0 - d);
              double norm2 = out.discriminator.net.penalty_backprop(
                  cache, -cfg.gp_coef * we * sp * sp, group_grads[g]);
              out.discriminator.net.backprop(
                  cache, -cfg.gp_coef * we * 2.0 * sp * sp * (1.0 - 2.0 * d) * norm2,
                  group_grads[g]);
              group_vals[g] -= cfg.gp_coef * we * sp * sp * norm2;
            }
          }
          if (seed != 0.0) out.discriminator.net.backprop(cache, seed, group_grads[g]);
        }
      });
      for (int g = 1; g < kGroups; ++g) group_grads[0].axpy(1.0, group_grads[g]);
      disc_loss = 0.0;
      for (int g = 0; g < kGroups; ++g) disc_loss += group_vals[g];
      disc_opt.apply(out.discriminator.net, group_grads[0], cfg.lr_disc, /*ascent=*/true);
    }

    refresh_disc_values();
    refresh_critic_values();
    auto reward_at = [&](std::int64_t key) { return -std::log(disc_value[key]); };

    // reward-to-go and critic values along the rollouts (table lookups)
    std::vector<Vec> rew(cfg.batch_size, Vec(T + 1, 0.0));
    std::vector<Vec> ret(cfg.batch_size, Vec(T + 1, 0.0));
    double mean_reward = 0.0;
    for (int i = 0; i < cfg.batch_size; ++i) {
      for (int t = 0; t <= T; ++t)
        rew[i][t] =
            reward_at(disc_key(t, roll.kappa[i][t], roll.steps[i][t].s, roll.steps[i][t].a));
      ret[i][T] = rew[i][T];
      for (int t = T - 1; t >= 0; --t) ret[i][t] = rew[i][t] + model.discount * ret[i][t + 1];
      for (int t = 0; t <= T; ++t) mean_reward += rew[i][t];
    }
    mean_reward /= static_cast<double>(cfg.batch_size) * (T + 1);

    // critic TD(0): group identical transitions, one backprop per distinct
    struct TdAgg {
      double weight = 0.0;
      double target_sum = 0.0;
    };
    std::map<std::int64_t, TdAgg> td;  // key: critic-key * (S+1) + (s_next+1 or 0)
    for (int i = 0; i < cfg.batch_size; ++i) {
      for (int t = 0; t <= T; ++t) {
        std::int64_t kprev = t > 0 ? roll.kappa[i][t - 1] : 0;
        std::int64_t ckey = critic_key(t, kprev, roll.steps[i][t].s);
        double target = rew[i][t];
        if (t < T)
          target += model.discount *
                    critic_value[critic_key(t + 1, roll.kappa[i][t], roll.steps[i][t + 1].s)];
        TdAgg& agg = td[ckey];
        agg.weight += 1.0;
        agg.target_sum += target;
      }
    }
    {
      std::vector<std::pair<std::int64_t, TdAgg>> items(td.begin(), td.end());
      for (auto& g : group_grads) g.init_like(critic.net);
      double inv = 1.0 / (static_cast<double>(cfg.batch_size) * (T + 1));
      parallel_for(kGroups, [&](std::int64_t g) {
        Mlp::Cache cache;
        for (std::size_t j = g; j < items.size(); j += kGroups) {
          std::int64_t ckey = items[j].first;
          const TdAgg& agg = items[j].second;
          double v = critic.net.forward_cached(critic_x(ckey), cache);
          // sum over identical transitions of 2 (v - target_i)
          critic.net.backprop(cache, inv * 2.0 * (agg.weight * v - agg.target_sum),
                              group_grads[g]);
        }
      });
      for (int g = 1; g < kGroups; ++g) group_grads[0].axpy(1.0, group_grads[g]);
      critic.opt.apply(critic.net, group_grads[0], cfg.lr_critic, /*ascent=*/false);
    }

    // actor: tabular policy gradient with advantages
    Vec gth(out.policy.theta.size(), 0.0);
    for (int i = 0; i < cfg.batch_size; ++i) {
      double g = 1.0;
      for (int t = 0; t <= T; ++t) {
        const TrajectoryStep& st = roll.steps[i][t];
        std::int64_t kprev = t > 0 ? roll.kappa[i][t - 1] : 0;
        double adv = ret[i][t] - critic_value[critic_key(t, kprev, st.s)];
        auto row = pi.row(t, st.z, st.s);
        for (int a = 0; a < A; ++a) {
          double ind = a == st.a ? 1.0 : 0.0;
          gth[out.policy.index(t, st.z, st.s, a)] += g * adv * (ind - row[a]);
        }
        g *= model.discount;
      }
    }
    for (double& v : gth) v /= cfg.batch_size;
    actor_opt.apply(out.policy.theta, gth, cfg.lr_actor, /*ascent=*/true);

    // device: score-function ascent, visitation-weighted over (t, kappa_prev, s)
    if (cfg.train_device && Z > 1) {
      std::map<std::int64_t, double> visits;  // critic-key -> count
      for (int i = 0; i < cfg.batch_size; ++i)
        for (int t = 0; t <= T; ++t) {
          std::int64_t kprev = t > 0 ? roll.kappa[i][t - 1] : 0;
          visits[critic_key(t, kprev, roll.steps[i][t].s)] += 1.0;
        }
      Vec gph(out.device.phi.size(), 0.0);
      Vec weight_t(T + 1, 0.0);
      Vec krow;
      for (const auto& [ckey, count] : visits) {
        // unpack (t, kprev, s)
        int t = 0;
        while (ckey >= critic_off[t + 1]) ++t;
        std::int64_t rem = ckey - critic_off[t];
        std::int64_t kprev = rem / S;
        int s = static_cast<int>(rem % S);
        Vec c(Z, 0.0);
        for (int z = 0; z < Z; ++z) {
          std::int64_t kz = t == 0 ? z : kprev * Z + z;
          for (int a = 0; a < A; ++a) {
            double q = reward_at(disc_key(t, kz, s, a));
            if (t < T) {
              model.kernel(s, a, model.mu0, krow);
              for (int sp = 0; sp < S; ++sp)
                if (krow[sp] > 0.0)
                  q += model.discount * krow[sp] * critic_value[critic_key(t + 1, kz, sp)];
            }
            c[z] += pi.prob(t, z, s, a) * q;
          }
        }
        double mean = 0.0;
        for (int z = 0; z < Z; ++z) mean += rho.prob(t, z) * c[z];
        for (int z = 0; z < Z; ++z)
          gph[static_cast<std::size_t>(t) * Z + z] += count * rho.prob(t, z) * (c[z] - mean);
        weight_t[t] += count;
      }
      for (int t = 0; t <= T; ++t)
        if (weight_t[t] > 0)
          for (int z = 0; z < Z; ++z) gph[static_cast<std::size_t>(t) * Z + z] /= weight_t[t];
      device_opt.apply(out.device.phi, gph, cfg.lr_device, /*ascent=*/true);
    }

    if (iter % cfg.eval_every == 0 || iter + 1 == cfg.iterations) {
      HistoryRow row;
      row.iter = iter;
      row.disc_loss = disc_loss;
      row.mean_policy_reward = mean_reward;
      if (eval_policy) {
        const CorrelationDevice* rd = eval_device ? eval_device : &rho;
        LogLossReport ll = log_loss(model, out.policy.policy(), *eval_policy, *rd,
                                    LogLossWeighting::kExpertVisitation);
        row.log_loss = ll.scalar;
        row.excess_log_loss = ll.excess;
      }
      row.max_cip_estimate = max_cip(model, out.policy.policy(), rho).value;
      out.history.push_back(row);
    }
  }
  return out;
}

}  // namespace mfce
