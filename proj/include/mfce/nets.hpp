#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mfce/errors.hpp"

namespace mfce {

enum class Activation { kLeakyRelu, kRelu };

// Dense feed-forward net, row-vector convention: z = x W + b per layer,
// hidden activation between layers, linear output head. Sized for the small
// discriminator/critic networks used here; everything is plain loops so the
// analytic gradients (including the input-gradient penalty below) stay exact.
struct Mlp {
  std::vector<int> sizes;  // [in, h1, ..., out]
  Activation act = Activation::kLeakyRelu;
  double slope = 0.2;  // leaky-relu negative slope
  std::vector<std::vector<double>> W;  // W[l]: sizes[l] x sizes[l+1], row-major
  std::vector<std::vector<double>> b;

  static Mlp make(std::vector<int> sizes, Activation act, std::uint64_t seed);

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  int layers() const { return static_cast<int>(W.size()); }

  // Linear output preactivation for a single input.
  double forward_scalar(std::span<const double> x) const;

  struct Cache {
    // h[0] = input, h[l] = activation after layer l (pre-activation stored too)
    std::vector<std::vector<double>> h;
    std::vector<std::vector<double>> z;
  };
  double forward_cached(std::span<const double> x, Cache& cache) const;

  // d(output preactivation)/dx for a single input (piecewise-linear exact).
  std::vector<double> input_gradient(const Cache& cache) const;

  struct Grads {
    std::vector<std::vector<double>> W, b;
    void init_like(const Mlp& net);
    void axpy(double a, const Grads& o);
    void scale(double a);
  };

  // Accumulate parameter gradients of (seed * output) for one cached sample.
  void backprop(const Cache& cache, double seed, Grads& grads) const;

  // Accumulate parameter gradients of coef * ||d out/d x||^2 for one cached
  // sample (activation masks held fixed; exact a.e. for piecewise-linear
  // activations). Returns ||d out/d x||^2.
  double penalty_backprop(const Cache& cache, double coef, Grads& grads) const;
};

struct AdamState {
  std::vector<std::vector<double>> mW, vW, mb, vb;
  std::int64_t step = 0;
  void init_like(const Mlp& net);
  // Gradient-descent step on -grads (pass ascent = true to maximize).
  void apply(Mlp& net, const Mlp::Grads& grads, double lr, bool ascent,
             double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
};

// Adam for flat tensors (policy logits, device logits).
struct AdamFlat {
  std::vector<double> m, v;
  std::int64_t step = 0;
  void init(std::size_t n);
  void apply(std::span<double> params, std::span<const double> grads, double lr, bool ascent,
             double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
};

}  // namespace mfce
