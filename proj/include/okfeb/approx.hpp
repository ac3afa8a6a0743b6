#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "okfeb/subspace.hpp"

namespace okfeb {

struct ErrorRecord {
  double e = 0.0;  // per-sample LS fit |phi(x) - phi_hat(x)|^2
  std::optional<double> y;
};

struct BoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;          // lhs <= rhs + 1e-9
  double slack = 0.0;          // rhs - lhs
  bool hypothesis_ok = true;   // stated hypotheses satisfied by the data
};

namespace detail {
inline BoundReport make_report(double lhs, double rhs, bool hypothesis_ok) {
  return BoundReport{lhs, rhs, lhs <= rhs + 1e-9, rhs - lhs, hypothesis_ok};
}
}  // namespace detail

/// Square-root factor of A^T K_S A; z = G q gives z_i . z_j = q_i^T A^T K_S A q_j,
/// the same Gram as the |S|-dimensional map K_S^{1/2} A Q in r dimensions.
inline Mat feature_map_factor(const SubspaceModel& model) {
  return psd_sqrt_factor(model.gram_factor());
}

inline Vec feature_map_z(const Mat& factor, const FeatureVector& q) {
  if (factor.cols() != q.size()) throw std::invalid_argument("feature_map_z: rank mismatch");
  return factor * q;
}

inline Vec feature_map_z(const SubspaceModel& model, const FeatureVector& q) {
  return feature_map_z(feature_map_factor(model), q);
}

/// K_hat = Q^T A^T K_S A Q.
inline Mat approx_kernel_matrix(const SubspaceModel& model, const Mat& Q) {
  if (Q.rows() != model.rank()) throw std::invalid_argument("approx_kernel_matrix: rank mismatch");
  Mat K_hat = Q.transpose() * model.gram_factor() * Q;
  return 0.5 * (K_hat + K_hat.transpose());
}

/// (1/N) |K - K_hat|_F.
inline double kernel_mismatch(const Mat& K, const Mat& K_hat) {
  if (K.rows() != K_hat.rows() || K.cols() != K_hat.cols())
    throw std::invalid_argument("kernel_mismatch: shape mismatch");
  if (K.rows() < 1) throw std::invalid_argument("kernel_mismatch requires N >= 1");
  return (K - K_hat).norm() / static_cast<double>(K.rows());
}

/// Sliding-window kernel mismatch averaged over the N - N_wind windows ending
/// at samples N_wind..N-1; each window is scored against the model snapshot at
/// its final sample, with features extracted from that snapshot.
inline double windowed_mismatch(const std::vector<Vec>& xs,
                                const std::function<const SubspaceModel&(Eigen::Index)>& model_at,
                                const KernelSpec& spec, Eigen::Index n_wind) {
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  if (n_wind < 2) throw std::invalid_argument("windowed_mismatch requires N_wind >= 2");
  if (n <= n_wind) throw std::invalid_argument("windowed_mismatch requires a stream longer than N_wind");
  double total = 0.0;
  Eigen::Index windows = 0;
  for (Eigen::Index end = n_wind; end < n; ++end) {
    const Eigen::Index begin = end - n_wind + 1;
    std::vector<Vec> window(xs.begin() + begin, xs.begin() + end + 1);
    const Mat K_w = kernel_matrix(spec, window);
    const SubspaceModel& snapshot = model_at(end);
    Mat Q(snapshot.rank(), n_wind);
    for (Eigen::Index j = 0; j < n_wind; ++j)
      Q.col(j) = snapshot.extract_feature(window[static_cast<std::size_t>(j)]);
    total += kernel_mismatch(K_w, approx_kernel_matrix(snapshot, Q));
    ++windows;
  }
  return total / static_cast<double>(windows);
}

/// Deterministic form of the kernel-approximation bound:
///   (1/N) |K - K_hat|_F <= sqrt(e_bar)(sqrt(e_bar) + 2)
/// with e_bar the empirical mean LS fit. Holds unconditionally for kernels
/// with k(x,x) <= 1; hypothesis_ok additionally records e_i in [0,1] and
/// |K_ij| <= 1.
inline BoundReport check_prop4(const std::vector<ErrorRecord>& errors, const Mat& K, const Mat& K_hat) {
  const Eigen::Index n = K.rows();
  if (static_cast<Eigen::Index>(errors.size()) != n)
    throw std::invalid_argument("check_prop4: error count does not match K");
  double e_bar = 0.0;
  bool hypothesis_ok = true;
  for (const auto& rec : errors) {
    if (rec.e < 0.0) throw std::invalid_argument("check_prop4: negative LS fit");
    e_bar += rec.e;
    if (rec.e > 1.0) hypothesis_ok = false;
  }
  e_bar /= static_cast<double>(n);
  if (K.cwiseAbs().maxCoeff() > 1.0 + 1e-12) hypothesis_ok = false;
  const double lhs = kernel_mismatch(K, K_hat);
  const double root = std::sqrt(e_bar);
  return detail::make_report(lhs, root * (root + 2.0), hypothesis_ok);
}

/// Spectral norm of a symmetric matrix by power iteration with a Rayleigh
/// quotient estimate; stops when the eigen-residual |Mv - est v| falls below
/// tol * |est|.
inline double spectral_norm_sym(const Mat& M, double tol = 1e-8, int max_iter = 10000) {
  if (M.rows() != M.cols()) throw std::invalid_argument("spectral_norm_sym requires a square matrix");
  const Eigen::Index n = M.rows();
  if (n == 0) return 0.0;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i) / static_cast<double>(n);
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec w = M * v;
    est = v.dot(w);
    if ((w - est * v).norm() <= tol * std::max(std::abs(est), 1e-300)) break;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
  }
  return std::abs(est);
}

/// Kernel-ridge coefficient stability: with beta = (K + lambda N I)^-1 y and
/// beta_hat its K_hat counterpart,
///   |beta - beta_hat| <= B_y |K - K_hat|_2 / (lambda^2 N).
inline BoundReport check_prop7(const Mat& K, const Mat& K_hat, const Vec& y, double lambda) {
  const Eigen::Index n = K.rows();
  if (K_hat.rows() != n || y.size() != n) throw std::invalid_argument("check_prop7: shape mismatch");
  if (!(lambda > 0.0)) throw std::invalid_argument("check_prop7 requires lambda > 0");
  const double shift = lambda * static_cast<double>(n);
  const Mat I = Mat::Identity(n, n);
  const Vec beta = Eigen::LLT<Mat>(K + shift * I).solve(y);
  const Vec beta_hat = Eigen::LLT<Mat>(K_hat + shift * I).solve(y);
  const double b_y = y.cwiseAbs().maxCoeff();
  const double lhs = (beta - beta_hat).norm();
  const double rhs = b_y * spectral_norm_sym(0.5 * ((K - K_hat) + (K - K_hat).transpose())) /
                     (lambda * lambda * static_cast<double>(n));
  return detail::make_report(lhs, rhs, true);
}

}  // namespace okfeb
