#include "mfce/nets.hpp"

#include <cmath>

namespace mfce {

Mlp Mlp::make(std::vector<int> sizes, Activation act, std::uint64_t seed) {
  Mlp net;
  net.sizes = std::move(sizes);
  net.act = act;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    int in = net.sizes[l], out = net.sizes[l + 1];
    double lim = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> unif(-lim, lim);
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (double& x : w) x = unif(rng);
    net.W.push_back(std::move(w));
    net.b.push_back(std::vector<double>(out, 0.0));
  }
  return net;
}

namespace {
inline double act_fwd(double z, Activation a, double slope) {
  if (a == Activation::kLeakyRelu) return z > 0 ? z : slope * z;
  return z > 0 ? z : 0.0;
}
inline double act_mask(double z, Activation a, double slope) {
  if (a == Activation::kLeakyRelu) return z > 0 ? 1.0 : slope;
  return z > 0 ? 1.0 : 0.0;
}
}  // namespace

double Mlp::forward_scalar(std::span<const double> x) const {
  std::vector<double> h(x.begin(), x.end()), nh;
  for (int l = 0; l < layers(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    nh.assign(out, 0.0);
    for (int j = 0; j < out; ++j) nh[j] = b[l][j];
    for (int i = 0; i < in; ++i) {
      double hi = h[i];
      if (hi == 0.0) continue;
      const double* wrow = &W[l][static_cast<std::size_t>(i) * out];
      for (int j = 0; j < out; ++j) nh[j] += hi * wrow[j];
    }
    if (l + 1 < layers())
      for (double& v : nh) v = act_fwd(v, act, slope);
    h = nh;
  }
  return h[0];
}

double Mlp::forward_cached(std::span<const double> x, Cache& cache) const {
  cache.h.assign(layers() + 1, {});
  cache.z.assign(layers(), {});
  cache.h[0].assign(x.begin(), x.end());
  for (int l = 0; l < layers(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    cache.z[l].assign(out, 0.0);
    for (int j = 0; j < out; ++j) cache.z[l][j] = b[l][j];
    for (int i = 0; i < in; ++i) {
      double hi = cache.h[l][i];
      if (hi == 0.0) continue;
      const double* wrow = &W[l][static_cast<std::size_t>(i) * out];
      for (int j = 0; j < out; ++j) cache.z[l][j] += hi * wrow[j];
    }
    cache.h[l + 1].assign(out, 0.0);
    for (int j = 0; j < out; ++j)
      cache.h[l + 1][j] =
          l + 1 < layers() ? act_fwd(cache.z[l][j], act, slope) : cache.z[l][j];
  }
  return cache.h[layers()][0];
}

std::vector<double> Mlp::input_gradient(const Cache& cache) const {
  // u_L = dout/d h_L backward through the stack.
  int L = layers();
  std::vector<double> u = {1.0};
  for (int l = L - 1; l >= 0; --l) {
    int in = sizes[l], out = sizes[l + 1];
    if (l < L - 1)
      for (int j = 0; j < out; ++j) u[j] *= act_mask(cache.z[l][j], act, slope);
    std::vector<double> nu(in, 0.0);
    for (int i = 0; i < in; ++i) {
      const double* wrow = &W[l][static_cast<std::size_t>(i) * out];
      double acc = 0.0;
      for (int j = 0; j < out; ++j) acc += wrow[j] * u[j];
      nu[i] = acc;
    }
    u = std::move(nu);
  }
  return u;
}

void Mlp::Grads::init_like(const Mlp& net) {
  W.clear();
  b.clear();
  for (int l = 0; l < net.layers(); ++l) {
    W.push_back(std::vector<double>(net.W[l].size(), 0.0));
    b.push_back(std::vector<double>(net.b[l].size(), 0.0));
  }
}

void Mlp::Grads::axpy(double a, const Grads& o) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    for (std::size_t i = 0; i < W[l].size(); ++i) W[l][i] += a * o.W[l][i];
    for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += a * o.b[l][i];
  }
}

void Mlp::Grads::scale(double a) {
  for (auto& w : W)
    for (double& x : w) x *= a;
  for (auto& bb : b)
    for (double& x : bb) x *= a;
}

void Mlp::backprop(const Cache& cache, double seed, Grads& grads) const {
  int L = layers();
  std::vector<double> delta = {seed};
  for (int l = L - 1; l >= 0; --l) {
    int in = sizes[l], out = sizes[l + 1];
    if (l < L - 1)
      for (int j = 0; j < out; ++j) delta[j] *= act_mask(cache.z[l][j], act, slope);
    for (int j = 0; j < out; ++j) grads.b[l][j] += delta[j];
    for (int i = 0; i < in; ++i) {
      double hi = cache.h[l][i];
      if (hi != 0.0) {
        double* grow = &grads.W[l][static_cast<std::size_t>(i) * out];
        for (int j = 0; j < out; ++j) grow[j] += hi * delta[j];
      }
    }
    if (l > 0) {
      std::vector<double> nd(in, 0.0);
      for (int i = 0; i < in; ++i) {
        const double* wrow = &W[l][static_cast<std::size_t>(i) * out];
        double acc = 0.0;
        for (int j = 0; j < out; ++j) acc += wrow[j] * delta[j];
        nd[i] = acc;
      }
      delta = std::move(nd);
    }
  }
}

double Mlp::penalty_backprop(const Cache& cache, double coef, Grads& grads) const {
  // Objective term coef * ||v||^2 with v = d out/d x. With row-vector layers
  // z_{l+1} = h_l W_l + b_l the chain is v = W_0 t_0, t_l = m_l .* (W_{l+1} t_{l+1}),
  // seeded by t_{L-1} = [1]; masks m_l are locally constant, so the parameter
  // gradient is exact a.e. for piecewise-linear activations. Biases do not
  // enter v and get no contribution here.
  int L = layers();
  std::vector<std::vector<double>> t(L);
  t[L - 1] = {1.0};
  for (int l = L - 2; l >= 0; --l) {
    int in = sizes[l + 1], out = sizes[l + 2];
    t[l].assign(in, 0.0);
    for (int i = 0; i < in; ++i) {
      const double* wrow = &W[l + 1][static_cast<std::size_t>(i) * out];
      double acc = 0.0;
      for (int j = 0; j < out; ++j) acc += wrow[j] * t[l + 1][j];
      t[l][i] = acc * act_mask(cache.z[l][i], act, slope);
    }
  }
  // v = W_0 t[0]
  std::vector<double> v(sizes[0], 0.0);
  {
    int in = sizes[0], out = sizes[1];
    for (int i = 0; i < in; ++i) {
      const double* wrow = &W[0][static_cast<std::size_t>(i) * out];
      double acc = 0.0;
      for (int j = 0; j < out; ++j) acc += wrow[j] * t[0][j];
      v[i] = acc;
    }
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;

  // Backward through the chain with seed s_v = 2 coef v.
  // v[i] = sum_j W_0[i][j] t0[j]:
  //   dObj/dW_0[i][j] += s_v[i] t0[j];  s_t0[j] = sum_i W_0[i][j] s_v[i].
  std::vector<double> s_cur(sizes[1], 0.0);
  {
    int in = sizes[0], out = sizes[1];
    for (int i = 0; i < in; ++i) {
      double sv = 2.0 * coef * v[i];
      if (sv == 0.0) continue;
      double* grow = &grads.W[0][static_cast<std::size_t>(i) * out];
      const double* wrow = &W[0][static_cast<std::size_t>(i) * out];
      for (int j = 0; j < out; ++j) {
        grow[j] += sv * t[0][j];
        s_cur[j] += sv * wrow[j];
      }
    }
  }
  // t[l][i] = mask_l[i] * sum_j W_{l+1}[i][j] t_{l+1}[j]
  for (int l = 0; l + 1 < L; ++l) {
    int in = sizes[l + 1], out = sizes[l + 2];
    std::vector<double> s_next(out, 0.0);
    for (int i = 0; i < in; ++i) {
      double si = s_cur[i] * act_mask(cache.z[l][i], act, slope);
      if (si == 0.0) continue;
      double* grow = &grads.W[l + 1][static_cast<std::size_t>(i) * out];
      const double* wrow = &W[l + 1][static_cast<std::size_t>(i) * out];
      for (int j = 0; j < out; ++j) {
        grow[j] += si * t[l + 1][j];
        s_next[j] += si * wrow[j];
      }
    }
    s_cur = std::move(s_next);
  }
  return norm2;
}

void AdamState::init_like(const Mlp& net) {
  mW.clear();
  vW.clear();
  mb.clear();
  vb.clear();
  for (int l = 0; l < net.layers(); ++l) {
    mW.push_back(std::vector<double>(net.W[l].size(), 0.0));
    vW.push_back(std::vector<double>(net.W[l].size(), 0.0));
    mb.push_back(std::vector<double>(net.b[l].size(), 0.0));
    vb.push_back(std::vector<double>(net.b[l].size(), 0.0));
  }
}

void AdamState::apply(Mlp& net, const Mlp::Grads& grads, double lr, bool ascent, double beta1,
                      double beta2, double eps) {
  ++step;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  double sign = ascent ? 1.0 : -1.0;
  for (int l = 0; l < net.layers(); ++l) {
    for (std::size_t i = 0; i < net.W[l].size(); ++i) {
      double g = grads.W[l][i];
      mW[l][i] = beta1 * mW[l][i] + (1 - beta1) * g;
      vW[l][i] = beta2 * vW[l][i] + (1 - beta2) * g * g;
      net.W[l][i] += sign * lr * (mW[l][i] / c1) / (std::sqrt(vW[l][i] / c2) + eps);
    }
    for (std::size_t i = 0; i < net.b[l].size(); ++i) {
      double g = grads.b[l][i];
      mb[l][i] = beta1 * mb[l][i] + (1 - beta1) * g;
      vb[l][i] = beta2 * vb[l][i] + (1 - beta2) * g * g;
      net.b[l][i] += sign * lr * (mb[l][i] / c1) / (std::sqrt(vb[l][i] / c2) + eps);
    }
  }
}

void AdamFlat::init(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  step = 0;
}

void AdamFlat::apply(std::span<double> params, std::span<const double> grads, double lr,
                     bool ascent, double beta1, double beta2, double eps) {
  if (m.size() != params.size()) init(params.size());
  ++step;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  double sign = ascent ? 1.0 : -1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    m[i] = beta1 * m[i] + (1 - beta1) * g;
    v[i] = beta2 * v[i] + (1 - beta2) * g * g;
    params[i] += sign * lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

}  // namespace mfce
