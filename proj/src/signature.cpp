#include "mfce/signature.hpp"

namespace mfce {

std::int64_t signature_dimension(int dim, int depth) {
  if (dim < 1 || depth < 1) throw DomainError("signature_dimension: dim and depth must be >= 1");
  std::int64_t total = 0, size = 1;
  for (int k = 1; k <= depth; ++k) {
    size *= dim;
    total += size;
  }
  return total;
}

SignatureVector segment_signature(std::span<const double> delta, int depth) {
  int d = static_cast<int>(delta.size());
  SignatureVector sig{d, depth, std::vector<double>(signature_dimension(d, depth), 0.0)};
  std::vector<double> tensor(delta.begin(), delta.end());
  double factorial = 1.0;
  std::int64_t off = 0;
  for (int k = 1; k <= depth; ++k) {
    factorial *= k;
    if (k > 1) {
      std::vector<double> next(tensor.size() * d);
      for (std::size_t i = 0; i < tensor.size(); ++i)
        for (int j = 0; j < d; ++j) next[i * d + j] = tensor[i] * delta[j];
      tensor = std::move(next);
    }
    for (std::size_t i = 0; i < tensor.size(); ++i) sig.data[off + i] = tensor[i] / factorial;
    off += tensor.size();
  }
  return sig;
}

SignatureVector chen_concat(const SignatureVector& a, const SignatureVector& b) {
  if (a.dim != b.dim || a.depth != b.depth)
    throw DimensionMismatch("chen_concat: mismatched signatures");
  int d = a.dim, depth = a.depth;
  SignatureVector out{d, depth, std::vector<double>(a.data.size(), 0.0)};
  std::int64_t off_n = 0, size_n = d;
  for (int n = 1; n <= depth; ++n) {
    // S(ab)_n = S(a)_n + S(b)_n + sum_{i=1..n-1} S(a)_i (x) S(b)_{n-i}
    for (std::int64_t j = 0; j < size_n; ++j)
      out.data[off_n + j] = a.data[off_n + j] + b.data[off_n + j];
    std::int64_t off_i = 0, size_i = d;
    for (int i = 1; i < n; ++i) {
      std::int64_t size_j = size_n / size_i;           // d^{n-i}
      std::int64_t off_j = out.level_offset(n - i);
      for (std::int64_t p = 0; p < size_i; ++p) {
        double av = a.data[off_i + p];
        if (av == 0.0) continue;
        for (std::int64_t q = 0; q < size_j; ++q)
          out.data[off_n + p * size_j + q] += av * b.data[off_j + q];
      }
      off_i += size_i;
      size_i *= d;
    }
    off_n += size_n;
    size_n *= d;
  }
  return out;
}

SignatureVector path_signature(std::span<const std::vector<double>> points, int depth) {
  if (points.empty()) throw DomainError("path_signature: empty point sequence");
  if (depth < 1) throw DomainError("path_signature: depth must be >= 1");
  int d = static_cast<int>(points[0].size());
  SignatureVector sig{d, depth, std::vector<double>(signature_dimension(d, depth), 0.0)};
  bool have_segment = false;
  std::vector<double> delta(d);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (static_cast<int>(points[i + 1].size()) != d)
      throw DimensionMismatch("path_signature: inconsistent point dimension");
    for (int j = 0; j < d; ++j) delta[j] = points[i + 1][j] - points[i][j];
    SignatureVector seg = segment_signature(delta, depth);
    sig = have_segment ? chen_concat(sig, seg) : std::move(seg);
    have_segment = true;
  }
  return sig;
}

std::vector<double> embed_signal_history(std::span<const int> z_prefix, int num_signals,
                                         int depth) {
  std::int64_t n = signature_dimension(num_signals, depth);
  if (z_prefix.empty()) return std::vector<double>(n, 0.0);
  std::vector<std::vector<double>> points(z_prefix.size() + 1,
                                          std::vector<double>(num_signals, 0.0));
  for (std::size_t i = 0; i < z_prefix.size(); ++i) {
    int z = z_prefix[i];
    if (z < 0 || z >= num_signals) throw DomainError("embed_signal_history: index out of range");
    points[i + 1][z] = 1.0;
  }
  return path_signature(points, depth).data;
}

}  // namespace mfce
