#include "mfce/environments.hpp"

#include <cmath>
#include <mutex>

namespace mfce {

namespace {

DenseKernel dense_from_pl(int S, int A, const std::vector<std::vector<double>>& p_rows) {
  DenseKernel k{S, A, Vec(static_cast<std::size_t>(S) * A * S, 0.0)};
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int sp = 0; sp < S; ++sp)
        k.table[(static_cast<std::size_t>(s) * A + a) * S + sp] = p_rows[s * A + a][sp];
  return k;
}

// Traffic network of Example 1: S = {C, L, R}, A = {L, R}, reward
// r(s,a,mu) = 1_{s=L} mu(L) + 1_{s=R} mu(R), kernel per Table 2.
EnvironmentBundle build_traffic() {
  EnvironmentBundle env;
  MfgModel& m = env.model;
  m.num_states = 3;
  m.num_actions = 2;
  m.num_signals = 2;
  m.horizon = 1;
  m.mu0 = {1.0, 0.0, 0.0};
  m.state_names = {"C", "L", "R"};
  m.action_names = {"L", "R"};
  m.signal_names = {"0", "1"};
  auto row = [](double pl) { return std::vector<double>{0.0, pl, 1.0 - pl}; };
  m.dense_kernel = dense_from_pl(3, 2,
                                 {row(1.0), row(0.0),          // from C: L, R
                                  row(1.0), row(0.25),         // from L
                                  row(0.75), row(0.0)});       // from R
  AffineReward r{3, 2, Vec(6, 0.0), Vec(18, 0.0)};
  for (int a = 0; a < 2; ++a) {
    r.coef[(1 * 2 + a) * 3 + 1] = 1.0;  // at L: mu(L)
    r.coef[(2 * 2 + a) * 3 + 2] = 1.0;  // at R: mu(R)
  }
  m.affine_reward = r;
  m.kernel_builtin = "traffic";
  m.reward_builtin = "traffic";

  BehavioralPolicy pi = BehavioralPolicy::uniform(2, 2, 3, 2);
  auto setL = [&](int t, int z, int s, double pl) {
    double p[2] = {pl, 1.0 - pl};
    pi.set_row(t, z, s, p);
  };
  setL(0, 0, 0, 2.0 / 3.0);
  setL(0, 1, 0, 1.0 / 3.0);
  setL(1, 0, 1, 1.0);
  setL(1, 1, 1, 1.0 / 9.0);
  setL(1, 0, 2, 8.0 / 9.0);
  setL(1, 1, 2, 0.0);
  env.expert_policy = pi;
  env.expert_device = CorrelationDevice::uniform(2, 2);
  env.notes = "traffic network, expert pair from the worked example tables";
  return env;
}

// Sequential squeeze: S = {0,1,2}, A = {0,1}, state-independent kernel,
// crowd-seeking reward r(s,.,mu) = mu(s) for s in {0,1}.
EnvironmentBundle build_squeeze(int T, int Z) {
  EnvironmentBundle env;
  MfgModel& m = env.model;
  m.num_states = 3;
  m.num_actions = 2;
  m.num_signals = Z;
  m.horizon = T;
  m.mu0 = {0.0, 0.0, 1.0};
  m.state_names = {"0", "1", "2"};
  m.action_names = {"0", "1"};
  for (int z = 0; z < Z; ++z) m.signal_names.push_back(std::to_string(z));
  std::vector<double> a0 = {0.75, 0.25, 0.0}, a1 = {0.25, 0.75, 0.0};
  m.dense_kernel = dense_from_pl(3, 2, {a0, a1, a0, a1, a0, a1});
  AffineReward r{3, 2, Vec(6, 0.0), Vec(18, 0.0)};
  for (int a = 0; a < 2; ++a) {
    r.coef[(0 * 2 + a) * 3 + 0] = 1.0;
    r.coef[(1 * 2 + a) * 3 + 1] = 1.0;
  }
  m.affine_reward = r;
  m.kernel_builtin = m.reward_builtin = (Z == 2 ? "squeeze2" : "squeeze3");
  return env;
}

// Rock-paper-scissors against the mean field: S = {C,R,P,S}, A = {R,P,S},
// deterministic kernel s_{t+1} = state of a_t.
EnvironmentBundle build_rps(int Z) {
  EnvironmentBundle env;
  MfgModel& m = env.model;
  m.num_states = 4;
  m.num_actions = 3;
  m.num_signals = Z;
  m.horizon = 1;
  m.mu0 = {1.0, 0.0, 0.0, 0.0};
  m.state_names = {"C", "R", "P", "S"};
  m.action_names = {"R", "P", "S"};
  for (int z = 0; z < Z; ++z) m.signal_names.push_back(std::to_string(z));
  DenseKernel k{4, 3, Vec(48, 0.0)};
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) k.table[(static_cast<std::size_t>(s) * 3 + a) * 4 + (a + 1)] = 1.0;
  m.dense_kernel = k;
  AffineReward r{4, 3, Vec(12, 0.0), Vec(48, 0.0)};
  for (int a = 0; a < 3; ++a) {
    double* cR = &r.coef[(1 * 3 + a) * 4];
    cR[3] = 2.0;  cR[2] = -1.0;   // r(R) = 2 mu(S) - mu(P)
    double* cP = &r.coef[(2 * 3 + a) * 4];
    cP[1] = 4.0;  cP[3] = -2.0;   // r(P) = 4 mu(R) - 2 mu(S)
    double* cS = &r.coef[(3 * 3 + a) * 4];
    cS[2] = 2.0;  cS[1] = -1.0;   // r(S) = 2 mu(P) - mu(R)
  }
  m.affine_reward = r;
  m.kernel_builtin = m.reward_builtin = "rps";
  return env;
}

// Flock alignment game: state = previous velocity (rest + 4 unit directions),
// deterministic kernel s_{t+1} = a_t, reward -||v_a - mean velocity||^2.
EnvironmentBundle build_flock(int T, int Z) {
  EnvironmentBundle env;
  MfgModel& m = env.model;
  m.num_states = 5;
  m.num_actions = 4;
  m.num_signals = Z;
  m.horizon = T;
  m.mu0 = {1.0, 0.0, 0.0, 0.0, 0.0};
  m.state_names = {"rest", "+x", "+y", "-x", "-y"};
  m.action_names = {"+x", "+y", "-x", "-y"};
  for (int z = 0; z < Z; ++z) m.signal_names.push_back(std::to_string(z));
  DenseKernel k{5, 4, Vec(100, 0.0)};
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 4; ++a) k.table[(static_cast<std::size_t>(s) * 4 + a) * 5 + (a + 1)] = 1.0;
  m.dense_kernel = k;
  static const double vx[5] = {0, 1, 0, -1, 0};
  static const double vy[5] = {0, 0, 1, 0, -1};
  m.reward_fn = [](int /*s*/, int a, const Vec& mu) {
    double mx = 0.0, my = 0.0;
    for (int sp = 0; sp < 5; ++sp) {
      mx += mu[sp] * vx[sp];
      my += mu[sp] * vy[sp];
    }
    double dx = vx[a + 1] - mx, dy = vy[a + 1] - my;
    return -(dx * dx + dy * dy);
  };
  // |grad_mu r| = |2 v_s' . (v_a - m)|, affine in mu, maximized at simplex
  // vertices: 2 * 1 * 2 = 4. Reward range [-4, 0].
  m.reward_lipschitz_override = 4.0;
  m.reward_bound_override = 4.0;
  m.kernel_builtin = m.reward_builtin = "flock";
  return env;
}

// Absent-minded driver. The exit payoff 3(1 - mu(s1)) is collected on arrival
// at the transit state, one step after the exit decision, so the congestion
// level reflects the exit wave itself; rewards stay pre-decision and the
// kernel mu-independent. The policy table is shared across both time steps
// and the expert pair is certified with persistent (time-shared) swaps.
EnvironmentBundle build_driver() {
  EnvironmentBundle env;
  MfgModel& m = env.model;
  m.num_states = 3;  // s1 (on the highway), sE (just exited), s2 (done)
  m.num_actions = 2; // E, B
  m.num_signals = 2;
  m.horizon = 1;
  m.mu0 = {1.0, 0.0, 0.0};
  m.state_names = {"s1", "sE", "s2"};
  m.action_names = {"E", "B"};
  m.signal_names = {"0", "1"};
  m.dense_kernel = dense_from_pl(3, 2,
                                 {{0, 1, 0}, {1, 0, 0},   // s1: E -> sE, B -> stay
                                  {0, 0, 1}, {0, 0, 1},   // sE -> s2
                                  {0, 0, 1}, {0, 0, 1}});
  AffineReward r{3, 2, Vec(6, 0.0), Vec(18, 0.0)};
  r.base[0 * 2 + 0] = 3.0;
  r.coef[(0 * 2 + 0) * 3 + 0] = -3.0;  // r(s1, E) = 3(1 - mu(s1))
  r.base[0 * 2 + 1] = 0.5;             // r(s1, B) = 1/2
  for (int a = 0; a < 2; ++a) {
    r.base[1 * 2 + a] = 3.0;
    r.coef[(1 * 2 + a) * 3 + 0] = -3.0;  // r(sE, .) = 3(1 - mu(s1))
  }
  m.affine_reward = r;
  m.kernel_builtin = m.reward_builtin = "driver";

  BehavioralPolicy pi = BehavioralPolicy::zeros(2, 2, 3, 2);
  for (int t = 0; t < 2; ++t) {
    double z0[2] = {0.5, 0.5}, z1[2] = {0.0, 1.0}, rest[2] = {0.0, 1.0};
    pi.set_row(t, 0, 0, z0);  // pi(B|s1, z=0) = 1/2
    pi.set_row(t, 1, 0, z1);  // pi(B|s1, z=1) = 1
    for (int z = 0; z < 2; ++z) {
      pi.set_row(t, z, 1, rest);
      pi.set_row(t, z, 2, rest);
    }
  }
  env.expert_policy = pi;
  env.expert_device = CorrelationDevice::uniform(2, 2);
  env.time_shared = true;
  env.notes = "absent-minded driver; expert certified against persistent swaps";
  return env;
}

BehavioralPolicy squeeze3_init() {
  // Mixed rows at z in {0,1}, deterministic opposite rows at z in {2,3}.
  BehavioralPolicy pi = BehavioralPolicy::zeros(3, 4, 3, 2);
  for (int t = 0; t < 3; ++t)
    for (int s = 0; s < 3; ++s) {
      double r0[2] = {1.0 / 3.0, 2.0 / 3.0};
      double r1[2] = {2.0 / 3.0, 1.0 / 3.0};
      double r2[2] = {1.0, 0.0};
      double r3[2] = {0.0, 1.0};
      pi.set_row(t, 0, s, r0);
      pi.set_row(t, 1, s, r1);
      pi.set_row(t, 2, s, r2);
      pi.set_row(t, 3, s, r3);
    }
  return pi;
}

BehavioralPolicy squeeze2_init() {
  // Follow the signal parity.
  BehavioralPolicy pi = BehavioralPolicy::zeros(2, 2, 3, 2);
  for (int t = 0; t < 2; ++t)
    for (int s = 0; s < 3; ++s)
      for (int z = 0; z < 2; ++z) pi.row(t, z, s)[z] = 1.0;
  return pi;
}

BehavioralPolicy flock_init() {
  BehavioralPolicy pi = BehavioralPolicy::zeros(3, 4, 5, 4);
  for (int t = 0; t < 3; ++t)
    for (int z = 0; z < 4; ++z)
      for (int s = 0; s < 5; ++s) pi.row(t, z, s)[0] = 1.0;
  return pi;
}

EnvironmentBundle build_bare(const std::string& name) {
  if (name == "traffic") return build_traffic();
  if (name == "driver") return build_driver();
  if (name == "squeeze2") return build_squeeze(1, 2);
  if (name == "squeeze3") return build_squeeze(2, 4);
  if (name == "rps") return build_rps(1);
  if (name == "flock") return build_flock(2, 4);
  throw DomainError("unknown environment: " + name);
}

// Solver-built experts, solved once per process.
const EnvironmentBundle& cached_solved(const std::string& name) {
  static std::map<std::string, EnvironmentBundle> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;

  EnvironmentBundle env = build_bare(name);
  SolveOptions opts;
  if (name == "squeeze2") {
    opts.init = squeeze2_init();
    opts.max_iters = 200;
  } else if (name == "squeeze3") {
    opts.init = squeeze3_init();
    opts.max_iters = 200;
  } else if (name == "flock") {
    opts.init = flock_init();
    opts.max_iters = 200;
  } else {  // rps: signal-free MFNE by harmonic fictitious play
    opts.max_iters = 2'000'000;
    opts.tolerance = 5e-7;
  }
  CorrelationDevice rho = name == "rps" ? CorrelationDevice::dirac(env.model.horizon + 1, 1)
                                        : CorrelationDevice::uniform(env.model.horizon + 1,
                                                                     env.model.num_signals);
  SolveResult sol = solve_amfce_fixed_point(env.model, rho, opts);
  env.expert_policy = sol.policy;
  env.expert_device = rho;
  env.notes = name + " expert from the damped fixed point (max_gain " +
              std::to_string(sol.report.max_gain) + ")";
  return cache.emplace(name, std::move(env)).first->second;
}

}  // namespace

EnvironmentBundle build_env(const std::string& name, const EnvParams& params) {
  EnvironmentBundle env;
  if (name == "squeeze2" || name == "squeeze3" || name == "rps" || name == "flock")
    env = cached_solved(name);
  else
    env = build_bare(name);
  if (auto it = params.find("discount"); it != params.end()) env.model.discount = it->second;
  env.model.validate();
  if (env.expert_policy) env.expert_policy->validate();
  if (env.expert_device) env.expert_device->validate();
  return env;
}

MfgModel build_model(const std::string& name) { return build_bare(name).model; }

std::vector<std::string> env_names() {
  return {"traffic", "squeeze2", "squeeze3", "rps", "flock", "driver"};
}

}  // namespace mfce
