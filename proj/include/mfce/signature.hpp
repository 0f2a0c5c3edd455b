#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfce/errors.hpp"

namespace mfce {

// Truncated path signature: concatenated levels of sizes d, d^2, ..., d^n.
// The constant level-0 term is omitted from storage.
struct SignatureVector {
  int dim = 0;
  int depth = 0;
  std::vector<double> data;

  std::int64_t level_offset(int k) const {  // k in 1..depth
    std::int64_t off = 0, size = dim;
    for (int i = 1; i < k; ++i) {
      off += size;
      size *= dim;
    }
    return off;
  }
  std::span<const double> level(int k) const {
    std::int64_t size = 1;
    for (int i = 0; i < k; ++i) size *= dim;
    return {data.data() + level_offset(k), static_cast<std::size_t>(size)};
  }
};

std::int64_t signature_dimension(int dim, int depth);

// Signature of one linear segment with increment delta: level k = delta^{(x) k} / k!.
SignatureVector segment_signature(std::span<const double> delta, int depth);

// Chen's identity: signature of the concatenation of two paths.
SignatureVector chen_concat(const SignatureVector& a, const SignatureVector& b);

// Exact truncated signature of the piecewise-linear path through the points.
// A single point yields the all-zero vector.
SignatureVector path_signature(std::span<const std::vector<double>> points, int depth);

// One-hot lift of a signal history with a zero basepoint prepended, then the
// path signature; the mean-field feature mu_hat in the training loop.
std::vector<double> embed_signal_history(std::span<const int> z_prefix, int num_signals,
                                         int depth);

}  // namespace mfce
