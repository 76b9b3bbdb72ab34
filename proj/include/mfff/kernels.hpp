#pragma once

// Inner loops shared by the spectral, branching and ODE modules.
//
// Every kernel has a plain serial reference next to the variant used in
// production. The reference versions are kept for the equivalence tests and
// the benchmark target; they are not called from library code.

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace mfff::kernels {

// ---------------------------------------------------------------------------
// Min-kernel operator  (L f)(x_i) = sum_j min(x_i, x_j) w_j f_j
// ---------------------------------------------------------------------------

/// Dense O(n^2) reference.
template <class T>
void min_kernel_apply_serial(std::span<const double> x, std::span<const double> w,
                             std::span<const T> f, std::span<T> out) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    T acc{};
    for (std::size_t j = 0; j < n; ++j) acc += (x[i] < x[j] ? x[i] : x[j]) * w[j] * f[j];
    out[i] = acc;
  }
}

/// Dense O(n^2), rows distributed over OpenMP threads. Each row is summed in
/// a fixed order, so the result does not depend on the thread count.
template <class T>
void min_kernel_apply_omp(std::span<const double> x, std::span<const double> w,
                          std::span<const T> f, std::span<T> out) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    T acc{};
    const double xi = x[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < x.size(); ++j) acc += (xi < x[j] ? xi : x[j]) * w[j] * f[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

/// O(n) for sorted positions:
///   (L f)(x_i) = sum_{j<=i} x_j w_j f_j + x_i sum_{j>i} w_j f_j.
template <class T>
void min_kernel_apply_prefix(std::span<const double> x, std::span<const double> w,
                             std::span<const T> f, std::span<T> out) {
  const std::size_t n = x.size();
  T upper{};
  for (std::size_t j = 0; j < n; ++j) upper += w[j] * f[j];
  T lower{};
  for (std::size_t i = 0; i < n; ++i) {
    const T wf = w[i] * f[i];
    lower += x[i] * wf;
    upper -= wf;
    out[i] = lower + x[i] * upper;
  }
}

/// The same sum evaluated at sorted query points q (merge walk), for
/// extending grid functions off the atoms.
template <class T>
void min_kernel_eval_sorted(std::span<const double> x, std::span<const double> w,
                            std::span<const T> f, std::span<const double> q, std::span<T> out) {
  T upper{};
  for (std::size_t j = 0; j < x.size(); ++j) upper += w[j] * f[j];
  T lower{};
  std::size_t j = 0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    while (j < x.size() && x[j] <= q[k]) {
      const T wf = w[j] * f[j];
      lower += x[j] * wf;
      upper -= wf;
      ++j;
    }
    out[k] = lower + q[k] * upper;
  }
}

// ---------------------------------------------------------------------------
// Self-convolution of a cluster-size vector. v[k-1] holds size k; the output
// out[k-1] = sum_{l=1}^{k-1} v_l v_{k-l} for k = 1..K (so out[0] = 0).
// ---------------------------------------------------------------------------

// Folded sum for output size k: 2 sum_{l < k/2} v_l v_{k-l} + middle term.
// `r` is v reversed, so both operands are read forward and the loop vectorizes.
inline double convolution_term(std::span<const double> v, std::span<const double> r, std::size_t k) {
  const std::size_t K = v.size();
  const std::size_t half = k / 2;
  const std::size_t hi = half + (k % 2);  // l in [1, hi)
  const double* a = v.data();
  const double* b = r.data() + (K - k);  // b[l] = v[k - l - 1]
  // eight independent partial sums hide the add latency
  double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t l = 1;
  for (; l + 8 <= hi; l += 8)
    for (std::size_t u = 0; u < 8; ++u) p[u] += a[l - 1 + u] * b[l + u];
  double acc = ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
  for (; l < hi; ++l) acc += a[l - 1] * b[l];
  acc *= 2.0;
  if (k % 2 == 0) acc += v[half - 1] * v[half - 1];
  return acc;
}

inline void self_convolution_serial(std::span<const double> v, std::span<double> out) {
  const std::size_t K = v.size();
  out[0] = 0.0;
  for (std::size_t k = 2; k <= K; ++k) {
    double acc = 0.0;
    for (std::size_t l = 1; l < k; ++l) acc += v[l - 1] * v[k - l - 1];
    out[k - 1] = acc;
  }
}

/// Folded, vectorized sum with OpenMP over output sizes. Each output is a
/// fixed-order reduction, so results do not depend on the thread count.
inline void self_convolution_omp(std::span<const double> v, std::span<double> out,
                                 std::vector<double>& reversed) {
  const auto K = static_cast<std::ptrdiff_t>(v.size());
  reversed.assign(v.rbegin(), v.rend());
  out[0] = 0.0;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t k = 2; k <= K; ++k) {
    out[static_cast<std::size_t>(k - 1)] = convolution_term(v, reversed, static_cast<std::size_t>(k));
  }
}

inline void self_convolution_omp(std::span<const double> v, std::span<double> out) {
  std::vector<double> reversed;
  self_convolution_omp(v, out, reversed);
}

}  // namespace mfff::kernels
