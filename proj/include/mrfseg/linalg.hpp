#pragma once

// Fixed-size vector/matrix helpers for at most two echoes. Only the leading
// d entries (or d x d block) are meaningful.

#include <array>
#include <cmath>
#include <span>

#include "mrfseg/lattice.hpp"

namespace mrfseg {

using EchoVector = std::array<double, kMaxChannels>;

struct EchoMatrix {
  std::array<double, kMaxChannels * kMaxChannels> m{};

  double& operator()(int r, int c) { return m[r * kMaxChannels + c]; }
  double operator()(int r, int c) const { return m[r * kMaxChannels + c]; }

  static EchoMatrix identity(int d) {
    EchoMatrix out;
    for (int k = 0; k < d; ++k) out(k, k) = 1.0;
    return out;
  }
  static EchoMatrix scaled_identity(int d, double s) {
    EchoMatrix out;
    for (int k = 0; k < d; ++k) out(k, k) = s;
    return out;
  }
};

inline EchoVector to_echo(std::span<const double> v) {
  EchoVector out{};
  for (std::size_t k = 0; k < v.size() && k < out.size(); ++k) out[k] = v[k];
  return out;
}

inline double determinant(const EchoMatrix& a, int d) {
  return d == 1 ? a(0, 0) : a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
}

/// Inverse; caller guarantees a non-zero determinant.
inline EchoMatrix inverse(const EchoMatrix& a, int d) {
  EchoMatrix out;
  if (d == 1) {
    out(0, 0) = 1.0 / a(0, 0);
    return out;
  }
  const double det = determinant(a, d);
  out(0, 0) = a(1, 1) / det;
  out(1, 1) = a(0, 0) / det;
  out(0, 1) = -a(0, 1) / det;
  out(1, 0) = -a(1, 0) / det;
  return out;
}

inline EchoVector multiply(const EchoMatrix& a, const EchoVector& v, int d) {
  EchoVector out{};
  for (int r = 0; r < d; ++r) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += a(r, c) * v[c];
    out[r] = s;
  }
  return out;
}

inline EchoMatrix multiply(const EchoMatrix& a, const EchoMatrix& b, int d) {
  EchoMatrix out;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += a(r, k) * b(k, c);
      out(r, c) = s;
    }
  }
  return out;
}

/// v^T a v
inline double quadratic_form(const EchoMatrix& a, const EchoVector& v, int d) {
  double s = 0.0;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) s += v[r] * a(r, c) * v[c];
  }
  return s;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const EchoMatrix& a, int d) {
  if (d == 1) return a(0, 0);
  const double mean = 0.5 * (a(0, 0) + a(1, 1));
  const double half_diff = 0.5 * (a(0, 0) - a(1, 1));
  return mean - std::sqrt(half_diff * half_diff + a(0, 1) * a(1, 0));
}

inline double trace(const EchoMatrix& a, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a(k, k);
  return s;
}

}  // namespace mrfseg
