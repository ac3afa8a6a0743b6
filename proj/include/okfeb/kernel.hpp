#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace okfeb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class KernelFamily { gaussian, polynomial, linear };

/// Closed-form kernel function family. Gaussian uses exp(-|x-y|^2 / gamma),
/// i.e. gamma is the squared-distance bandwidth, not 2*sigma^2.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double gamma = 1.0;   // gaussian bandwidth
  int degree = 2;       // polynomial degree
  double offset = 0.0;  // polynomial additive constant

  void validate() const {
    if (family == KernelFamily::gaussian && !(gamma > 0.0))
      throw std::invalid_argument("gaussian kernel requires gamma > 0");
    if (family == KernelFamily::polynomial && degree < 1)
      throw std::invalid_argument("polynomial kernel requires degree >= 1");
  }
};

namespace detail {
inline void check_same_dim(const Vec& x, const Vec& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("kernel arguments have mismatched dimensions (" +
                                std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
}
}  // namespace detail

inline double eval_kernel(const KernelSpec& spec, const Vec& x, const Vec& y) {
  detail::check_same_dim(x, y);
  if (x.size() == 0) throw std::invalid_argument("kernel arguments must have dimension >= 1");
  spec.validate();
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-(x - y).squaredNorm() / spec.gamma);
    case KernelFamily::polynomial:
      return std::pow(x.dot(y) + spec.offset, spec.degree);
    case KernelFamily::linear:
      return x.dot(y);
  }
  throw std::logic_error("unreachable kernel family");
}

inline double self_kernel(const KernelSpec& spec, const Vec& x) {
  if (spec.family == KernelFamily::gaussian) return 1.0;
  return eval_kernel(spec, x, x);
}

/// Entry i is eval_kernel(spec, basis[i], x).
inline Vec kernel_vector(const KernelSpec& spec, const std::vector<Vec>& basis, const Vec& x) {
  if (basis.empty()) throw std::invalid_argument("kernel_vector requires a nonempty basis");
  Vec k(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) k[static_cast<Eigen::Index>(i)] = eval_kernel(spec, basis[i], x);
  return k;
}

inline Mat kernel_matrix(const KernelSpec& spec, const std::vector<Vec>& xs) {
  if (xs.empty()) throw std::invalid_argument("kernel_matrix requires n >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  Mat K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = (i == j) ? self_kernel(spec, xs[static_cast<std::size_t>(i)])
                                : eval_kernel(spec, xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

/// Square-root factor G of a symmetric PSD matrix, G^T G = M.
/// Eigenvalues in [-tol, 0) with tol = 1e-10 * max|eig| are clamped to zero;
/// anything below -tol is rejected.
inline Mat psd_sqrt_factor(const Mat& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("psd_sqrt_factor requires a square matrix");
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Vec& evals = es.eigenvalues();
  const double scale = std::max(std::abs(evals.minCoeff()), std::abs(evals.maxCoeff()));
  const double tol = 1e-10 * scale;
  Vec clamped = evals;
  for (Eigen::Index i = 0; i < clamped.size(); ++i) {
    if (clamped[i] < -tol)
      throw std::invalid_argument("matrix is not positive semidefinite (eigenvalue " +
                                  std::to_string(clamped[i]) + " below tolerance)");
    if (clamped[i] < 0.0) clamped[i] = 0.0;
  }
  return clamped.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace okfeb
