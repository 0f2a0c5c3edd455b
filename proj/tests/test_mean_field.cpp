#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfce/environments.hpp"
#include "mfce/mean_field.hpp"
#include "mfce/parallel.hpp"
#include "mfce/reference.hpp"
#include "test_helpers.hpp"

using namespace mfce;
using mfce::testing::random_device;
using mfce::testing::random_model;
using mfce::testing::random_policy;

TEST_CASE("propagate: traffic expert, t=0, z=0 gives (0, 2/3, 1/3)") {
  EnvironmentBundle env = build_env("traffic");
  MeanField mu1 =
      propagate_mean_field(MeanField{env.model.mu0}, *env.expert_policy, 0, 0, env.model);
  CHECK(mu1[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mu1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(mu1[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("propagate: deterministic policy and kernel gives a point mass") {
  std::mt19937_64 rng(1);
  MfgModel m = random_model(rng);
  for (int s = 0; s < m.num_states; ++s)
    for (int sp = 0; sp < m.num_states; ++sp)
      m.dense_kernel->table[(static_cast<std::size_t>(s) * m.num_actions + 0) * m.num_states +
                            sp] = sp == 1 ? 1.0 : 0.0;
  BehavioralPolicy det =
      BehavioralPolicy::zeros(m.horizon + 1, m.num_signals, m.num_states, m.num_actions);
  for (int t = 0; t <= m.horizon; ++t)
    for (int z = 0; z < m.num_signals; ++z)
      for (int s = 0; s < m.num_states; ++s) det.row(t, z, s)[0] = 1.0;
  MeanField out = propagate_mean_field(MeanField{m.mu0}, det, 0, 0, m);
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("propagate: squeeze uniform policy splits the crowd") {
  MfgModel m = build_model("squeeze3");
  BehavioralPolicy uni = BehavioralPolicy::uniform(3, 4, 3, 2);
  MeanField mu1 = propagate_mean_field(MeanField{m.mu0}, uni, 0, 0, m);
  CHECK(mu1[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mu1[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mu1[2] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("propagate preserves the simplex on random models") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    MfgModel m = random_model(rng);
    BehavioralPolicy pi = random_policy(m, rng);
    Vec mu = m.mu0;
    for (int t = 0; t < m.horizon; ++t) {
      MeanField next = propagate_mean_field(MeanField{mu}, pi, t, t % m.num_signals, m);
      double sum = 0.0;
      for (double v : next.probs) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      mu = next.probs;
    }
  }
}

TEST_CASE("propagate rejects out-of-range signals") {
  EnvironmentBundle env = build_env("traffic");
  CHECK_THROWS_AS(
      propagate_mean_field(MeanField{env.model.mu0}, *env.expert_policy, 0, 5, env.model),
      DomainError);
}

TEST_CASE("posterior: uniform prior with z-independent policy stays uniform") {
  BehavioralPolicy pi = BehavioralPolicy::uniform(1, 2, 1, 2);
  Vec rho_t = {0.5, 0.5};
  Vec post = predict_signal_posterior(rho_t, pi, 0, 0, 0);
  CHECK(post[0] == doctest::Approx(0.5));
  CHECK(post[1] == doctest::Approx(0.5));
}

TEST_CASE("posterior: traffic t=0 recommendation L gives (2/3, 1/3)") {
  EnvironmentBundle env = build_env("traffic");
  Vec rho_t = {0.5, 0.5};
  Vec post = predict_signal_posterior(rho_t, *env.expert_policy, 0, 0, 0);
  CHECK(post[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("posterior: zero likelihood excludes the signal; zero evidence throws") {
  BehavioralPolicy pi = BehavioralPolicy::zeros(1, 2, 1, 2);
  double r0[2] = {1.0, 0.0}, r1[2] = {0.0, 1.0};
  pi.set_row(0, 0, 0, r0);
  pi.set_row(0, 1, 0, r1);
  Vec rho_t = {0.5, 0.5};
  Vec post = predict_signal_posterior(rho_t, pi, 0, 0, 0);
  CHECK(post[0] == doctest::Approx(1.0));
  CHECK(post[1] == doctest::Approx(0.0));

  Vec dirac = {1.0, 0.0};
  CHECK_THROWS_AS(predict_signal_posterior(dirac, pi, 0, 0, 1), ZeroProbabilityObservation);
}

TEST_CASE("Bayes consistency: recommendation-marginalized posterior recovers the prior") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    MfgModel m = random_model(rng);
    BehavioralPolicy pi = random_policy(m, rng);
    CorrelationDevice rho = random_device(m, rng);
    for (int t = 0; t <= m.horizon; ++t)
      for (int s = 0; s < m.num_states; ++s) {
        Vec back(m.num_signals, 0.0);
        for (int a = 0; a < m.num_actions; ++a) {
          double evidence = 0.0;
          for (int z = 0; z < m.num_signals; ++z)
            evidence += rho.prob(t, z) * pi.prob(t, z, s, a);
          if (evidence <= 0.0) continue;
          Vec post = predict_signal_posterior(rho.row(t), pi, t, s, a);
          for (int z = 0; z < m.num_signals; ++z) back[z] += evidence * post[z];
        }
        for (int z = 0; z < m.num_signals; ++z)
          CHECK(back[z] == doctest::Approx(rho.prob(t, z)).epsilon(1e-9));
      }
  }
}

TEST_CASE("sample_trajectory: deterministic setup is seed independent, seeds replay") {
  EnvironmentBundle env = build_env("traffic");
  BehavioralPolicy det = BehavioralPolicy::zeros(2, 2, 3, 2);
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z)
      for (int s = 0; s < 3; ++s) det.row(t, z, s)[0] = 1.0;
  CorrelationDevice dirac = CorrelationDevice::dirac(2, 2);
  Trajectory a = sample_trajectory(env.model, det, dirac, 1);
  Trajectory b = sample_trajectory(env.model, det, dirac, 999);
  REQUIRE(a.steps.size() == 2);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].s == b.steps[i].s);
    CHECK(a.steps[i].z == b.steps[i].z);
    CHECK(a.steps[i].a == b.steps[i].a);
  }

  Trajectory c = sample_trajectory(env.model, *env.expert_policy, *env.expert_device, 42);
  Trajectory d = sample_trajectory(env.model, *env.expert_policy, *env.expert_device, 42);
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    CHECK(c.steps[i].s == d.steps[i].s);
    CHECK(c.steps[i].z == d.steps[i].z);
    CHECK(c.steps[i].a == d.steps[i].a);
    for (int s = 0; s < 3; ++s) CHECK(c.mean_fields[i][s] == d.mean_fields[i][s]);
  }
}

TEST_CASE("sample_trajectory: empirical action frequency at (C, z=0) is 2/3") {
  EnvironmentBundle env = build_env("traffic");
  const int n = 100000;
  int count_L = 0, count_total = 0;
  for (int i = 0; i < n; ++i) {
    Trajectory tr = sample_trajectory(env.model, *env.expert_policy, *env.expert_device, i);
    if (tr.steps[0].s == 0 && tr.steps[0].z == 0) {
      ++count_total;
      if (tr.steps[0].a == 0) ++count_L;
    }
  }
  double freq = static_cast<double>(count_L) / count_total;
  CHECK(std::fabs(freq - 2.0 / 3.0) < 0.01);
}

TEST_CASE("expected_return: T=0 reduces to a one-step expectation") {
  std::mt19937_64 rng(3);
  MfgModel m = random_model(rng, 3, 2, 2, 0);
  BehavioralPolicy pi = random_policy(m, rng);
  CorrelationDevice rho = random_device(m, rng);
  double j = expected_return(m, pi, pi, rho);
  double expect = 0.0;
  for (int z = 0; z < m.num_signals; ++z)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        expect += rho.prob(0, z) * m.mu0[s] * pi.prob(0, z, s, a) * m.reward(s, a, m.mu0);
  CHECK(j == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("expected_return: RPS all-paper vs all-rock population = 4") {
  MfgModel m = build_model("rps");
  BehavioralPolicy rock = BehavioralPolicy::zeros(2, 1, 4, 3);
  BehavioralPolicy paper = BehavioralPolicy::zeros(2, 1, 4, 3);
  for (int t = 0; t < 2; ++t)
    for (int s = 0; s < 4; ++s) {
      rock.row(t, 0, s)[0] = 1.0;
      paper.row(t, 0, s)[1] = 1.0;
    }
  CorrelationDevice dirac = CorrelationDevice::dirac(2, 1);
  CHECK(expected_return(m, paper, rock, dirac) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("expected_return: traffic expert J = 5/9 and matches Monte Carlo") {
  EnvironmentBundle env = build_env("traffic");
  double j =
      expected_return(env.model, *env.expert_policy, *env.expert_policy, *env.expert_device);
  CHECK(j == doctest::Approx(5.0 / 9.0).epsilon(1e-12));
  McEstimate mc = expected_return_mc(env.model, *env.expert_policy, *env.expert_policy,
                                     *env.expert_device, 100000, 7);
  CHECK(std::fabs(mc.mean - j) <= 3.0 * mc.std_error + 1e-9);
}

TEST_CASE("expected_return agrees with sampled returns within 4/sqrt(N) of the range") {
  EnvironmentBundle env = build_env("traffic");
  const int n = 100000;
  double sum = 0.0, lo = 1e300, hi = -1e300;
  for (int i = 0; i < n; ++i) {
    Trajectory tr =
        sample_trajectory(env.model, *env.expert_policy, *env.expert_device, 1000 + i);
    double r = trajectory_return(env.model, tr);
    sum += r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  double mean = sum / n;
  double exact =
      expected_return(env.model, *env.expert_policy, *env.expert_policy, *env.expert_device);
  CHECK(std::fabs(mean - exact) <= 4.0 / std::sqrt(static_cast<double>(n)) * (hi - lo));
}

TEST_CASE("Dirac-device reduction: |Z|=1 matches a signal-free forward chain") {
  std::mt19937_64 rng(5);
  MfgModel m = random_model(rng, 3, 2, 1, 2);
  BehavioralPolicy pi = random_policy(m, rng);
  CorrelationDevice rho = CorrelationDevice::dirac(m.horizon + 1, 1);
  Vec mu = m.mu0, d = m.mu0;
  double expect = 0.0, g = 1.0;
  Vec krow;
  for (int t = 0; t <= m.horizon; ++t) {
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        expect += g * d[s] * pi.prob(t, 0, s, a) * m.reward(s, a, mu);
    if (t < m.horizon) {
      Vec nd(m.num_states, 0.0), nmu(m.num_states, 0.0);
      for (int s = 0; s < m.num_states; ++s)
        for (int a = 0; a < m.num_actions; ++a) {
          m.kernel(s, a, mu, krow);
          for (int sp = 0; sp < m.num_states; ++sp) {
            nd[sp] += d[s] * pi.prob(t, 0, s, a) * krow[sp];
            nmu[sp] += mu[s] * pi.prob(t, 0, s, a) * krow[sp];
          }
        }
      d = nd;
      mu = nmu;
    }
    g *= m.discount;
  }
  CHECK(expected_return(m, pi, pi, rho) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("expected_return: enumeration cap throws") {
  std::mt19937_64 rng(9);
  MfgModel m = random_model(rng, 2, 2, 4, 2);
  BehavioralPolicy pi = random_policy(m, rng);
  CorrelationDevice rho = random_device(m, rng);
  ReturnOptions opts;
  opts.enumeration_cap = 10;
  CHECK_THROWS_AS(expected_return(m, pi, pi, rho, opts), EnumerationTooLarge);
}

TEST_CASE("parallel expected_return matches the serial reference") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    MfgModel m = random_model(rng, 3, 2, 3, 2);
    BehavioralPolicy pa = random_policy(m, rng), pp = random_policy(m, rng);
    CorrelationDevice rho = random_device(m, rng);
    int saved = num_workers();
    set_num_workers(4);
    double par = expected_return(m, pa, pp, rho);
    set_num_workers(saved);
    double ser = reference::expected_return(m, pa, pp, rho);
    CHECK(par == doctest::Approx(ser).epsilon(1e-15));
  }
}
